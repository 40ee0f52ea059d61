//! The clustered federated round loop.
//!
//! Each round every client starts from its cluster's model, runs local SGD,
//! and reports its output-layer parameters. The server standardises those
//! representations, regroups clients (DPMM chain, k-means, or not at all),
//! and averages member parameters into one model per cluster.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::{Aggregation, Algorithm, RunConfig};
use crate::dpmm::{posterior_logscore, zscore_columns, Assignment};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::metrics::{adjusted_rand_index, macro_f1, mean_sd, micro_accuracy, normalized_mutual_info, RoundRecord};
use crate::model::{init_params, local_update, loss, predict, representation, LabeledDataset, ModelSpec, ParamVector};
use crate::partition::{generate_pool, partition_clients, ClientPartition};
use crate::sampler::{run_chain, MoveKind};
use crate::seed::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Parameters after the most recent local update.
    pub params: ParamVector,
}

impl ClientState {
    pub fn n(&self) -> usize {
        self.train.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub params: ParamVector,
    /// Number of member clients.
    pub members: usize,
    /// Training samples held by the members.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationState {
    pub clients: Vec<ClientState>,
    pub ground_truth: Vec<usize>,
    pub assignment: Assignment,
    pub clusters: Vec<ClusterModel>,
    /// Number of completed rounds.
    pub round: usize,
}

impl FederationState {
    /// Everyone in one cluster holding `init`.
    pub fn new(partition: ClientPartition, init: ParamVector) -> Self {
        let clients: Vec<ClientState> = partition
            .clients
            .into_iter()
            .enumerate()
            .map(|(id, c)| ClientState { id, train: c.train, test: c.test, params: init.clone() })
            .collect();
        let samples = clients.iter().map(ClientState::n).sum();
        let m = clients.len();
        Self {
            clients,
            ground_truth: partition.ground_truth,
            assignment: Assignment::single(m),
            clusters: vec![ClusterModel { params: init, members: m, samples }],
            round: 0,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }
}

/// The client data a run with `cfg` trains on.
pub fn build_partition(cfg: &RunConfig) -> Result<ClientPartition> {
    cfg.validate()?;
    let pool = generate_pool(&cfg.pool, &mut stream_rng(cfg.seed, Stream::Pool, 0, 0));
    partition_clients(&pool, &cfg.partition, &mut stream_rng(cfg.seed, Stream::Partition, 0, 0))
}

/// Builds the synthetic clients and the randomly initialised single cluster.
pub fn setup(cfg: &RunConfig) -> Result<FederationState> {
    let partition = build_partition(cfg)?;
    let init = init_params(&cfg.model_spec(), &mut stream_rng(cfg.seed, Stream::Init, 0, 0));
    Ok(FederationState::new(partition, init))
}

/// Per-member weights of a cluster aggregate; they sum to one.
pub fn aggregation_weights(sample_counts: &[usize], mode: Aggregation) -> Vec<f64> {
    match mode {
        Aggregation::SampleWeighted => {
            let total: usize = sample_counts.iter().sum();
            sample_counts.iter().map(|&n| n as f64 / total as f64).collect()
        }
        Aggregation::Uniform => vec![1.0 / sample_counts.len() as f64; sample_counts.len()],
    }
}

/// Weighted mean of member parameters, computed as offsets from the first
/// member so identical inputs come back bit-for-bit.
pub fn aggregate(members: &[(&ParamVector, usize)], mode: Aggregation) -> Result<ParamVector> {
    let (first, _) = members.first().ok_or(Error::EmptyAggregate)?;
    let counts: Vec<usize> = members.iter().map(|(_, n)| *n).collect();
    let weights = aggregation_weights(&counts, mode);
    let mut out = first.0.clone();
    for ((p, _), w) in members.iter().zip(&weights).skip(1) {
        for ((o, v), base) in out.iter_mut().zip(&p.0).zip(&first.0) {
            *o += w * (v - base);
        }
    }
    Ok(ParamVector(out))
}

/// Sample-weighted within-cluster training loss summed over clusters.
pub fn clustered_objective(
    models: &[ParamVector],
    clients: &[ClientState],
    assignment: &Assignment,
    spec: &ModelSpec,
) -> Result<f64> {
    if assignment.len() != clients.len() {
        return Err(Error::LengthMismatch(assignment.len(), clients.len()));
    }
    if let Some(k) = (assignment.num_clusters()..models.len()).next() {
        return Err(Error::EmptyCluster(k));
    }
    let mut cluster_n = vec![0usize; models.len()];
    for (c, &k) in clients.iter().zip(assignment.labels()) {
        cluster_n[k] += c.n();
    }
    let mut total = 0.0;
    for (c, &k) in clients.iter().zip(assignment.labels()) {
        total += c.n() as f64 / cluster_n[k] as f64 * loss(&models[k], &c.train, spec)?;
    }
    Ok(total)
}

/// How a round regroups clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Dpmm,
    FixedK(usize),
    Global,
}

impl Grouping {
    pub fn from_config(cfg: &RunConfig) -> Self {
        match cfg.algorithm {
            Algorithm::Dpmm => Grouping::Dpmm,
            Algorithm::FixedK => Grouping::FixedK(cfg.fixed_k),
            Algorithm::Global => Grouping::Global,
        }
    }
}

fn local_updates(state: &FederationState, cfg: &RunConfig, spec: &ModelSpec, round: u64) -> Result<Vec<ParamVector>> {
    let update = |c: &ClientState| {
        let start = &state.clusters[state.assignment.label(c.id)].params;
        let mut rng = stream_rng(cfg.seed, Stream::LocalUpdate, round, c.id as u64);
        local_update(start, &c.train, &cfg.sgd, spec, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let out = state.clients.par_iter().map(update).collect();
    #[cfg(not(feature = "parallel"))]
    let out = state.clients.iter().map(update).collect();
    out
}

/// One federated round with the given grouping rule.
pub fn round_with(state: &mut FederationState, cfg: &RunConfig, grouping: Grouping) -> Result<RoundRecord> {
    let spec = cfg.model_spec();
    let t = state.round as u64 + 1;
    let m = state.clients.len();

    let updated = local_updates(state, cfg, &spec, t)?;
    for (c, p) in state.clients.iter_mut().zip(updated) {
        c.params = p;
    }

    let raw: Vec<Vec<f64>> = state
        .clients
        .iter()
        .map(|c| representation(&c.params, &spec).map(ParamVector::into_inner))
        .collect::<Result<_>>()?;
    let reps = zscore_columns(&raw);

    let mut rng = stream_rng(cfg.seed, Stream::Clustering, t, 0);
    let (assignment, accept_split, accept_merge) = match grouping {
        Grouping::Dpmm => {
            let init = if cfg.sampler.warm_start { state.assignment.clone() } else { Assignment::single(m) };
            let run = run_chain(&reps, &cfg.dp, &cfg.sampler, &mut rng, init);
            let (s, mg) = (run.accepted(MoveKind::Split), run.accepted(MoveKind::Merge));
            (run.assignment, s, mg)
        }
        Grouping::FixedK(k) => (kmeans(&reps, k, &mut rng)?, 0, 0),
        Grouping::Global => (Assignment::single(m), 0, 0),
    };

    let mut clusters = Vec::with_capacity(assignment.num_clusters());
    for k in 0..assignment.num_clusters() {
        let members: Vec<(&ParamVector, usize)> =
            assignment.members(k).into_iter().map(|i| (&state.clients[i].params, state.clients[i].n())).collect();
        let params = aggregate(&members, cfg.aggregation)?;
        clusters.push(ClusterModel {
            params,
            members: members.len(),
            samples: members.iter().map(|(_, n)| n).sum(),
        });
    }
    state.assignment = assignment;
    state.clusters = clusters;
    state.round += 1;

    let mut accs = Vec::with_capacity(m);
    let mut f1s = Vec::with_capacity(m);
    for c in &state.clients {
        let model = &state.clusters[state.assignment.label(c.id)].params;
        let preds = predict(model, &c.test, &spec)?;
        accs.push(micro_accuracy(&preds, &c.test.labels)?);
        f1s.push(macro_f1(&preds, &c.test.labels, spec.num_classes)?);
    }
    let (acc_mean, acc_sd) = mean_sd(&accs);
    let (f1_mean, f1_sd) = mean_sd(&f1s);
    let models: Vec<ParamVector> = state.clusters.iter().map(|c| c.params.clone()).collect();
    Ok(RoundRecord {
        round: state.round,
        k: state.num_clusters(),
        acc_mean,
        acc_sd,
        f1_mean,
        f1_sd,
        ari: adjusted_rand_index(state.assignment.labels(), &state.ground_truth)?,
        nmi: normalized_mutual_info(state.assignment.labels(), &state.ground_truth)?,
        logpost: posterior_logscore(&state.assignment, &reps, &cfg.dp),
        objective: clustered_objective(&models, &state.clients, &state.assignment, &spec)?,
        accept_split,
        accept_merge,
    })
}

/// One round of the configured algorithm.
pub fn run_round(state: &mut FederationState, cfg: &RunConfig) -> Result<RoundRecord> {
    round_with(state, cfg, Grouping::from_config(cfg))
}

/// One round of the k-means baseline with `k` clusters.
pub fn fixed_k_round(state: &mut FederationState, cfg: &RunConfig, k: usize) -> Result<RoundRecord> {
    if k == 0 || k > state.clients.len() {
        return Err(Error::TooManyClusters { k, m: state.clients.len() });
    }
    round_with(state, cfg, Grouping::FixedK(k))
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub trace: Vec<RoundRecord>,
    pub state: FederationState,
}

impl Experiment {
    pub fn final_k(&self) -> usize {
        self.state.num_clusters()
    }

    /// Mean of `field` over the last `n` rounds.
    pub fn tail_mean(&self, n: usize, field: impl Fn(&RoundRecord) -> f64) -> f64 {
        let tail = &self.trace[self.trace.len().saturating_sub(n)..];
        tail.iter().map(field).sum::<f64>() / tail.len() as f64
    }
}

/// Runs `cfg.rounds` rounds from a single randomly initialised cluster.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    let mut state = setup(cfg)?;
    let grouping = Grouping::from_config(cfg);
    let trace = (0..cfg.rounds).map(|_| round_with(&mut state, cfg, grouping)).collect::<Result<Vec<_>>>()?;
    Ok(Experiment { trace, state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        let a = ParamVector(vec![1.0, 1.0]);
        let b = ParamVector(vec![3.0, 3.0]);
        for mode in [Aggregation::SampleWeighted, Aggregation::Uniform] {
            assert_eq!(aggregate(&[(&a, 1), (&b, 1)], mode).unwrap().0, vec![2.0, 2.0]);
        }
        let z = ParamVector(vec![0.0, 0.0]);
        let f = ParamVector(vec![4.0, 4.0]);
        assert_eq!(aggregate(&[(&z, 1), (&f, 3)], Aggregation::SampleWeighted).unwrap().0, vec![3.0, 3.0]);
        assert_eq!(aggregate(&[(&z, 1), (&f, 3)], Aggregation::Uniform).unwrap().0, vec![2.0, 2.0]);
        assert_eq!(aggregate(&[(&b, 7)], Aggregation::SampleWeighted).unwrap(), b);
        assert_eq!(aggregate(&[], Aggregation::Uniform), Err(Error::EmptyAggregate));
    }

    #[test]
    fn identical_members_aggregate_exactly() {
        let p = ParamVector(vec![0.1, -0.7, 1.0 / 3.0]);
        let out = aggregate(&[(&p, 3), (&p, 5), (&p, 11)], Aggregation::SampleWeighted).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn weights_sum_to_one() {
        for mode in [Aggregation::SampleWeighted, Aggregation::Uniform] {
            let w = aggregation_weights(&[3, 7, 11, 1, 9], mode);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn client(id: usize, n: usize, label: usize) -> ClientState {
        let ds = LabeledDataset::new(1, vec![0.0; n], vec![label; n]);
        ClientState { id, train: ds.clone(), test: ds, params: ParamVector::zeros(4) }
    }

    #[test]
    fn objective_examples() {
        let spec = ModelSpec::linear(1, 2);
        // Biases (b, -b): loss on label 0 is softplus(-2b), on label 1 softplus(2b).
        let model = ParamVector(vec![0.0, 0.0, 0.0, 0.0]);
        let clients = vec![client(0, 2, 0), client(1, 2, 1)];
        let one = clustered_objective(std::slice::from_ref(&model), &clients, &Assignment::single(2), &spec).unwrap();
        assert!((one - 2f64.ln()).abs() < 1e-12);

        let singles = clustered_objective(&[model.clone(), model.clone()], &clients, &Assignment::singletons(2), &spec)
            .unwrap();
        assert!((singles - 2.0 * 2f64.ln()).abs() < 1e-12);

        let empty = clustered_objective(&[model.clone(), model], &clients, &Assignment::single(2), &spec);
        assert_eq!(empty, Err(Error::EmptyCluster(1)));
    }

    #[test]
    fn objective_weights_by_sample_count() {
        // Client losses 4 (n=1) and 0 (n=3) under one model give 1.0.
        let spec = ModelSpec::linear(1, 2);
        let bias = 4.0f64.exp_m1().ln(); // softplus(bias) = 4
        let model = ParamVector(vec![0.0, 0.0, 0.0, bias]);
        let mut clients = vec![client(0, 1, 0), client(1, 3, 1)];
        clients[1].train = LabeledDataset::new(1, vec![0.0; 3], vec![1; 3]);
        let f = clustered_objective(std::slice::from_ref(&model), &clients, &Assignment::single(2), &spec).unwrap();
        let l0 = loss(&model, &clients[0].train, &spec).unwrap();
        let l1 = loss(&model, &clients[1].train, &spec).unwrap();
        assert!((l0 - 4.0).abs() < 1e-9);
        assert!((f - (0.25 * l0 + 0.75 * l1)).abs() < 1e-12);
    }
}
