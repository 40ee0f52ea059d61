//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: the exact prior distribution of the number
//! of clusters under the Chinese restaurant process, split-merge clustering
//! of points placed on a canvas, and a small clustered federated run that
//! the page advances one round at a time.
//!
//! Every binding is a thin wrapper around a plain Rust function so the same
//! logic can be tested natively.

use dpmm_cfl::config::{Algorithm, RunConfig};
use dpmm_cfl::dpmm::{Assignment, DpConfig};
use dpmm_cfl::error::{Error, Result};
use dpmm_cfl::federation::{run_round, setup, FederationState};
use dpmm_cfl::metrics::RoundRecord;
use dpmm_cfl::partition::{PartitionSpec, PoolSpec, Scheme};
use dpmm_cfl::sampler::{run_chain, SamplerConfig};
use dpmm_cfl::seed::SimRng;
use rand::SeedableRng;
use wasm_bindgen::prelude::*;

/// Largest number of customers the cluster-count distribution accepts.
pub const MAX_CUSTOMERS: usize = 2000;

/// Largest number of canvas points the clustering demo accepts.
pub const MAX_POINTS: usize = 500;

/// `P(K = k)` for `k = 0..=m` when `m` customers are seated by a Chinese
/// restaurant process with concentration `alpha`.
///
/// Built customer by customer: the `n`-th arrival opens a new table with
/// probability `alpha / (n + alpha)`.
pub fn cluster_count_distribution(m: usize, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig("alpha must be positive".into()));
    }
    if m > MAX_CUSTOMERS {
        return Err(Error::InvalidConfig(format!("at most {MAX_CUSTOMERS} customers")));
    }
    let mut p = vec![0.0; m + 1];
    p[0] = 1.0;
    for n in 0..m {
        let open = alpha / (n as f64 + alpha);
        for k in (1..=n + 1).rev() {
            p[k] = p[k] * (1.0 - open) + p[k - 1] * open;
        }
        p[0] = 0.0;
    }
    Ok(p)
}

/// Clusters 2-D points given as interleaved `[x0, y0, x1, y1, ...]`.
///
/// Starts from a single cluster and runs `moves` split-merge proposals
/// followed by `moves` Gibbs sweeps. The prior mean is the origin. Returns
/// one label per point, numbered in order of first appearance.
pub fn cluster_points(
    xy: &[f64],
    alpha: f64,
    sigma0_sq: f64,
    sigma_sq: f64,
    moves: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    if !xy.len().is_multiple_of(2) {
        return Err(Error::InvalidConfig("coordinates must come in (x, y) pairs".into()));
    }
    if xy.len() / 2 > MAX_POINTS {
        return Err(Error::InvalidConfig(format!("at most {MAX_POINTS} points")));
    }
    if xy.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("coordinates must be finite".into()));
    }
    let cfg = DpConfig { alpha, mu0: Vec::new(), sigma0_sq, sigma_sq };
    cfg.validate()?;
    let reps: Vec<Vec<f64>> = xy.chunks(2).map(<[f64]>::to_vec).collect();
    if reps.is_empty() {
        return Ok(Vec::new());
    }
    let sm = SamplerConfig { n_split_merge: moves, n_gibbs_sweeps: moves, ..SamplerConfig::default() };
    let mut rng = SimRng::seed_from_u64(seed);
    let run = run_chain(&reps, &cfg, &sm, &mut rng, Assignment::single(reps.len()));
    Ok(run.assignment.labels().iter().map(|&l| l as u32).collect())
}

/// The run configuration behind [`FederatedDemo`]: a few hundred samples in
/// two dimensions, Dirichlet label skew across `num_clusters` groups.
pub fn demo_config(num_clusters: usize, num_clients: usize, alpha_inter: f64, seed: u64, algorithm: Algorithm) -> RunConfig {
    let mut cfg = RunConfig::desk_default();
    cfg.algorithm = algorithm;
    cfg.seed = seed;
    cfg.fixed_k = num_clusters;
    cfg.pool = PoolSpec {
        num_classes: 10,
        samples_per_class: 60,
        feature_dim: 2,
        class_separation: 2.5,
        noise_sd: 1.0,
    };
    cfg.partition = PartitionSpec {
        num_clusters,
        num_clients,
        alpha_inter,
        alpha_intra: 30.0,
        ..PartitionSpec::new(Scheme::Dirichlet)
    };
    cfg
}

/// A federated run advanced one round per [`FederatedRun::step`].
pub struct FederatedRun {
    cfg: RunConfig,
    state: FederationState,
    trace: Vec<RoundRecord>,
}

impl FederatedRun {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let state = setup(&cfg)?;
        Ok(Self { cfg, state, trace: Vec::new() })
    }

    pub fn step(&mut self) -> Result<&RoundRecord> {
        let record = run_round(&mut self.state, &self.cfg)?;
        self.trace.push(record);
        Ok(self.trace.last().expect("just pushed"))
    }

    pub fn trace(&self) -> &[RoundRecord] {
        &self.trace
    }

    pub fn labels(&self) -> &[usize] {
        self.state.assignment.labels()
    }

    pub fn ground_truth(&self) -> &[usize] {
        &self.state.ground_truth
    }
}

fn js_error(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// See [`cluster_count_distribution`].
#[wasm_bindgen(js_name = clusterCountDistribution)]
pub fn cluster_count_distribution_js(m: usize, alpha: f64) -> std::result::Result<Vec<f64>, JsError> {
    cluster_count_distribution(m, alpha).map_err(js_error)
}

/// See [`cluster_points`].
#[wasm_bindgen(js_name = clusterPoints)]
pub fn cluster_points_js(
    xy: &[f64],
    alpha: f64,
    sigma0_sq: f64,
    sigma_sq: f64,
    moves: usize,
    seed: u64,
) -> std::result::Result<Vec<u32>, JsError> {
    cluster_points(xy, alpha, sigma0_sq, sigma_sq, moves, seed).map_err(js_error)
}

/// Browser handle on a [`FederatedRun`].
#[wasm_bindgen]
pub struct FederatedDemo {
    run: FederatedRun,
}

#[wasm_bindgen]
impl FederatedDemo {
    /// `algorithm` is one of `dpmm`, `fixedk` or `global`; `fixedk` uses
    /// `num_clusters` clusters.
    #[wasm_bindgen(constructor)]
    pub fn new(
        num_clusters: usize,
        num_clients: usize,
        alpha_inter: f64,
        seed: u64,
        algorithm: &str,
    ) -> std::result::Result<FederatedDemo, JsError> {
        let algorithm = algorithm.parse().map_err(js_error)?;
        let cfg = demo_config(num_clusters, num_clients, alpha_inter, seed, algorithm);
        Ok(Self { run: FederatedRun::new(cfg).map_err(js_error)? })
    }

    /// Runs one round.
    pub fn step(&mut self) -> std::result::Result<(), JsError> {
        self.run.step().map(|_| ()).map_err(js_error)
    }

    /// Completed rounds.
    pub fn rounds(&self) -> usize {
        self.run.trace().len()
    }

    /// Cluster count after each completed round.
    #[wasm_bindgen(js_name = clusterCounts)]
    pub fn cluster_counts(&self) -> Vec<u32> {
        self.run.trace().iter().map(|r| r.k as u32).collect()
    }

    /// Mean client test accuracy after each completed round.
    pub fn accuracy(&self) -> Vec<f64> {
        self.run.trace().iter().map(|r| r.acc_mean).collect()
    }

    /// Adjusted Rand index against the true grouping after each round.
    pub fn ari(&self) -> Vec<f64> {
        self.run.trace().iter().map(|r| r.ari).collect()
    }

    /// Current cluster of every client.
    pub fn labels(&self) -> Vec<u32> {
        self.run.labels().iter().map(|&l| l as u32).collect()
    }

    /// True group of every client.
    #[wasm_bindgen(js_name = groundTruth)]
    pub fn ground_truth(&self) -> Vec<u32> {
        self.run.ground_truth().iter().map(|&l| l as u32).collect()
    }
}
