//! Settings for one simulated federated run.

use serde::{Deserialize, Serialize};

use crate::dpmm::DpConfig;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, SgdConfig};
use crate::partition::{PartitionSpec, PoolSpec, Scheme};
use crate::sampler::SamplerConfig;

/// How clients are grouped each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Dirichlet-process mixture clustering with split-merge MCMC.
    #[serde(rename = "dpmm")]
    Dpmm,
    /// k-means over representations with a fixed number of clusters.
    #[serde(rename = "fixedk")]
    FixedK,
    /// A single global model (federated averaging).
    #[serde(rename = "global")]
    Global,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpmm" => Ok(Self::Dpmm),
            "fixedk" => Ok(Self::FixedK),
            "global" => Ok(Self::Global),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Cluster model aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Members weighted by local training-set size.
    #[default]
    SampleWeighted,
    /// Plain mean over members.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub seed: u64,
    /// Cluster count for [`Algorithm::FixedK`].
    pub fixed_k: usize,
    pub aggregation: Aggregation,
    pub hidden_dims: Vec<usize>,
    pub sgd: SgdConfig,
    pub dp: DpConfig,
    pub sampler: SamplerConfig,
    pub pool: PoolSpec,
    pub partition: PartitionSpec,
}

impl RunConfig {
    /// Small Dirichlet-skew setup with the library defaults.
    pub fn desk_default() -> Self {
        Self {
            algorithm: Algorithm::Dpmm,
            rounds: 30,
            seed: 0,
            fixed_k: 4,
            aggregation: Aggregation::SampleWeighted,
            hidden_dims: Vec::new(),
            sgd: SgdConfig::default(),
            dp: DpConfig::default(),
            sampler: SamplerConfig::default(),
            pool: PoolSpec::default(),
            partition: PartitionSpec::new(Scheme::Dirichlet),
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            input_dim: self.pool.feature_dim,
            num_classes: self.pool.num_classes,
            hidden_dims: self.hidden_dims.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("run.rounds must be >= 1".into()));
        }
        if self.algorithm == Algorithm::FixedK {
            if self.fixed_k == 0 {
                return Err(Error::InvalidConfig("run.fixed_k must be >= 1".into()));
            }
            if self.fixed_k > self.partition.num_clients {
                return Err(Error::InvalidConfig(format!(
                    "run.fixed_k ({}) exceeds partition.num_clients ({})",
                    self.fixed_k, self.partition.num_clients
                )));
            }
        }
        self.pool.validate()?;
        self.model_spec().validate()?;
        self.sgd.validate()?;
        self.dp.validate()?;
        let rep_dim = self.model_spec().last_layer_len();
        if !self.dp.mu0.is_empty() && self.dp.mu0.len() != rep_dim {
            return Err(Error::InvalidConfig(format!(
                "dp.mu0 must be empty or have {rep_dim} entries (the representation dimension), got {}",
                self.dp.mu0.len()
            )));
        }
        self.partition.validate(self.pool.num_classes)
    }
}
