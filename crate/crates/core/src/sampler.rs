//! MCMC over assignments.
//!
//! Two move types share one target, the unnormalised posterior of
//! [`posterior_logscore`]:
//!
//! * conjugate Gibbs sweeps that reassign one item at a time, and
//! * split-merge Metropolis-Hastings moves whose split proposals come from
//!   restricted Gibbs scans started at a random launch state. A merge is
//!   proposed deterministically; its reverse-split probability is obtained by
//!   replaying the launch procedure and forcing the final scan onto the
//!   current split.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dpmm::{
    cluster_log_marginal, cluster_stats, crp_conditional_logprobs, for_each_set_partition, posterior_logscore,
    Assignment, ClusterStats, DpConfig,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Split-merge proposals per clustering step.
    #[serde(default = "SamplerConfig::default_sm")]
    pub n_split_merge: usize,
    #[serde(default = "SamplerConfig::default_gibbs")]
    pub n_gibbs_sweeps: usize,
    /// Intermediate restricted scans used to build the launch state.
    #[serde(default = "SamplerConfig::default_scans")]
    pub t_restricted_scans: usize,
    /// Start each round's chain from the previous round's assignment.
    #[serde(default = "SamplerConfig::default_warm")]
    pub warm_start: bool,
}

impl SamplerConfig {
    fn default_sm() -> usize {
        20
    }
    fn default_gibbs() -> usize {
        2
    }
    fn default_scans() -> usize {
        5
    }
    fn default_warm() -> bool {
        true
    }

    /// A sampler that performs no moves.
    pub fn frozen() -> Self {
        Self { n_split_merge: 0, n_gibbs_sweeps: 0, ..Self::default() }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_split_merge: Self::default_sm(),
            n_gibbs_sweeps: Self::default_gibbs(),
            t_restricted_scans: Self::default_scans(),
            warm_start: Self::default_warm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Split,
    Merge,
    Gibbs,
}

/// Diagnostics for one move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    /// `min(0, log MH ratio)`; zero for Gibbs sweeps.
    pub log_acceptance: f64,
    pub k_after: usize,
}

/// Final state and per-move trace of one chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub assignment: Assignment,
    pub moves: Vec<MoveOutcome>,
}

impl ChainRun {
    pub fn accepted(&self, kind: MoveKind) -> usize {
        self.moves.iter().filter(|m| m.kind == kind && m.accepted).count()
    }

    pub fn proposed(&self, kind: MoveKind) -> usize {
        self.moves.iter().filter(|m| m.kind == kind).count()
    }
}

/// Samples an index from unnormalised log weights by inverse CDF.
fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, wk) in w.iter().enumerate() {
        if u < *wk {
            return k;
        }
        u -= wk;
    }
    w.len() - 1
}

/// Log posterior predictive of `x` joining a cluster with statistics `stats`.
fn log_predictive(stats: &ClusterStats, x: &[f64], cfg: &DpConfig) -> f64 {
    let mut joined = stats.clone();
    joined.add(x);
    cluster_log_marginal(&joined, cfg) - cluster_log_marginal(stats, cfg)
}

/// One systematic Gibbs sweep over all items.
pub fn gibbs_sweep<R: Rng + ?Sized>(a: &Assignment, reps: &[Vec<f64>], cfg: &DpConfig, rng: &mut R) -> Assignment {
    let dim = reps.first().map_or(0, Vec::len);
    let mut labels = a.labels().to_vec();
    let mut stats = cluster_stats(a, reps);
    let singleton_cache: Vec<f64> =
        reps.iter().map(|x| cluster_log_marginal(&ClusterStats::from_points(dim, [x.as_slice()]), cfg)).collect();

    for i in 0..labels.len() {
        let x = &reps[i];
        let old = labels[i];
        stats[old].remove(x).expect("item belongs to its cluster");
        if stats[old].n == 0 {
            // Drop the empty cluster; the last cluster takes its slot.
            let last = stats.len() - 1;
            stats.swap_remove(old);
            if old != last {
                labels.iter_mut().filter(|l| **l == last).for_each(|l| *l = old);
            }
        }
        let sizes: Vec<usize> = stats.iter().map(|s| s.n).collect();
        let mut log_w = crp_conditional_logprobs(&sizes, cfg.alpha);
        for (k, s) in stats.iter().enumerate() {
            log_w[k] += log_predictive(s, x, cfg);
        }
        *log_w.last_mut().unwrap() += singleton_cache[i];
        let k = sample_log_weights(&log_w, rng);
        if k == stats.len() {
            stats.push(ClusterStats::empty(dim));
        }
        stats[k].add(x);
        labels[i] = k;
    }
    Assignment::from_labels(&labels)
}

/// Restricted scan over `members`, reassigning each between two anchor
/// clusters. `side[t] == true` places `members[t]` with the first anchor.
///
/// With `forced`, every choice is set to the target side and the log
/// probability of those choices is returned; otherwise choices are sampled
/// and the log probability of the sampled path is returned.
fn scan_sides<R: Rng + ?Sized>(
    members: &[usize],
    side: &mut [bool],
    stats: &mut [ClusterStats; 2],
    reps: &[Vec<f64>],
    cfg: &DpConfig,
    rng: &mut R,
    forced: Option<&[bool]>,
) -> f64 {
    let mut log_prob = 0.0;
    for (t, &s) in members.iter().enumerate() {
        let x = &reps[s];
        let from = if side[t] { 0 } else { 1 };
        stats[from].remove(x).expect("member counted on its side");
        let log_w0 = (stats[0].n as f64).ln() + log_predictive(&stats[0], x, cfg);
        let log_w1 = (stats[1].n as f64).ln() + log_predictive(&stats[1], x, cfg);
        // log p0 = -log(1 + e^(w1 - w0)), evaluated stably
        let diff = log_w1 - log_w0;
        let log_p0 = -softplus(diff);
        let log_p1 = -softplus(-diff);
        let to_first = match forced {
            Some(target) => target[t],
            None => rng.random::<f64>() < log_p0.exp(),
        };
        log_prob += if to_first { log_p0 } else { log_p1 };
        side[t] = to_first;
        stats[if to_first { 0 } else { 1 }].add(x);
    }
    log_prob
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn side_stats(anchors: [usize; 2], members: &[usize], side: &[bool], reps: &[Vec<f64>]) -> [ClusterStats; 2] {
    let dim = reps[anchors[0]].len();
    let mut stats = [
        ClusterStats::from_points(dim, [reps[anchors[0]].as_slice()]),
        ClusterStats::from_points(dim, [reps[anchors[1]].as_slice()]),
    ];
    for (t, &s) in members.iter().enumerate() {
        stats[if side[t] { 0 } else { 1 }].add(&reps[s]);
    }
    stats
}

/// One restricted Gibbs scan over `scan` between the clusters of anchors `i`
/// and `j`, which must differ. Items in `scan` move only between those two
/// clusters. Returns the new assignment and the log probability of the scan's
/// transitions; with `forced_target` each item is set to the cluster it shares
/// with `i` or `j` in the target, and that path's log probability is returned.
#[allow(clippy::too_many_arguments)]
pub fn restricted_gibbs_scan<R: Rng + ?Sized>(
    a: &Assignment,
    scan: &[usize],
    i: usize,
    j: usize,
    reps: &[Vec<f64>],
    cfg: &DpConfig,
    rng: &mut R,
    forced_target: Option<&Assignment>,
) -> Result<(Assignment, f64)> {
    let (ci, cj) = (a.label(i), a.label(j));
    if ci == cj {
        return Err(Error::AnchorsShareCluster(i, j));
    }
    if let Some(&bad) = scan.iter().find(|&&s| s == i || s == j) {
        return Err(Error::AnchorInScanSet(bad));
    }
    if let Some(&bad) = scan.iter().find(|&&s| a.label(s) != ci && a.label(s) != cj) {
        return Err(Error::OutsideAnchorClusters(bad));
    }
    let mut side: Vec<bool> = scan.iter().map(|&s| a.label(s) == ci).collect();
    let mut stats = side_stats([i, j], scan, &side, reps);
    let forced: Option<Vec<bool>> =
        forced_target.map(|t| scan.iter().map(|&s| t.label(s) == t.label(i)).collect());
    let log_prob = scan_sides(scan, &mut side, &mut stats, reps, cfg, rng, forced.as_deref());
    let mut labels = a.labels().to_vec();
    for (t, &s) in scan.iter().enumerate() {
        labels[s] = if side[t] { ci } else { cj };
    }
    Ok((Assignment::from_labels(&labels), log_prob))
}

/// Log posterior ratio of splitting a cluster into the two given halves.
fn log_split_gain(left: &ClusterStats, right: &ClusterStats, cfg: &DpConfig) -> f64 {
    let merged = left.merged(right);
    cfg.alpha.ln() + ln_gamma(left.n as f64) + ln_gamma(right.n as f64) - ln_gamma(merged.n as f64)
        + cluster_log_marginal(left, cfg)
        + cluster_log_marginal(right, cfg)
        - cluster_log_marginal(&merged, cfg)
}

/// One split-merge Metropolis-Hastings proposal.
pub fn split_merge_step<R: Rng + ?Sized>(
    a: &Assignment,
    reps: &[Vec<f64>],
    cfg: &DpConfig,
    sm: &SamplerConfig,
    rng: &mut R,
) -> Result<(Assignment, MoveOutcome)> {
    let m = a.len();
    if m < 2 {
        return Err(Error::TooFewItems(m));
    }
    let i = rng.random_range(0..m);
    let mut j = rng.random_range(0..m - 1);
    if j >= i {
        j += 1;
    }
    let (ci, cj) = (a.label(i), a.label(j));
    let members: Vec<usize> =
        (0..m).filter(|&s| s != i && s != j && (a.label(s) == ci || a.label(s) == cj)).collect();

    // Random launch state refined by intermediate restricted scans.
    let mut side: Vec<bool> = members.iter().map(|_| rng.random::<bool>()).collect();
    let mut stats = side_stats([i, j], &members, &side, reps);
    for _ in 0..sm.t_restricted_scans {
        scan_sides(&members, &mut side, &mut stats, reps, cfg, rng, None);
    }

    let (proposal, kind, log_ratio) = if ci == cj {
        let log_q_forward = scan_sides(&members, &mut side, &mut stats, reps, cfg, rng, None);
        let new_label = a.num_clusters();
        let mut labels = a.labels().to_vec();
        labels[i] = new_label;
        for (t, &s) in members.iter().enumerate() {
            if side[t] {
                labels[s] = new_label;
            }
        }
        let gain = log_split_gain(&stats[0], &stats[1], cfg);
        (labels, MoveKind::Split, gain - log_q_forward)
    } else {
        let current: Vec<bool> = members.iter().map(|&s| a.label(s) == ci).collect();
        let log_q_reverse = scan_sides(&members, &mut side, &mut stats, reps, cfg, rng, Some(&current));
        let labels: Vec<usize> = a.labels().iter().map(|&l| if l == ci { cj } else { l }).collect();
        let gain = log_split_gain(&stats[0], &stats[1], cfg);
        (labels, MoveKind::Merge, log_q_reverse - gain)
    };

    let log_acceptance = log_ratio.min(0.0);
    let accepted = log_acceptance >= 0.0 || rng.random::<f64>().ln() < log_acceptance;
    let next = if accepted { Assignment::from_labels(&proposal) } else { a.clone() };
    let outcome = MoveOutcome { kind, accepted, log_acceptance, k_after: next.num_clusters() };
    Ok((next, outcome))
}

/// Runs `n_split_merge` split-merge proposals followed by `n_gibbs_sweeps`
/// Gibbs sweeps, starting from `init`.
pub fn run_chain<R: Rng + ?Sized>(
    reps: &[Vec<f64>],
    cfg: &DpConfig,
    sm: &SamplerConfig,
    rng: &mut R,
    init: Assignment,
) -> ChainRun {
    let mut state = init;
    let mut moves = Vec::with_capacity(sm.n_split_merge + sm.n_gibbs_sweeps);
    if state.len() >= 2 {
        for _ in 0..sm.n_split_merge {
            let (next, outcome) = split_merge_step(&state, reps, cfg, sm, rng).expect("at least two items");
            state = next;
            moves.push(outcome);
        }
    }
    for _ in 0..sm.n_gibbs_sweeps {
        state = gibbs_sweep(&state, reps, cfg, rng);
        moves.push(MoveOutcome {
            kind: MoveKind::Gibbs,
            accepted: true,
            log_acceptance: 0.0,
            k_after: state.num_clusters(),
        });
    }
    ChainRun { assignment: state, moves }
}

/// Exact posterior over every set partition of at most 10 items.
pub fn enumerate_posterior(reps: &[Vec<f64>], cfg: &DpConfig) -> Result<Vec<(Assignment, f64)>> {
    if reps.len() > 10 {
        return Err(Error::EnumerationTooLarge(reps.len()));
    }
    let mut out = Vec::new();
    for_each_set_partition(reps.len(), |labels| {
        let a = Assignment::from_labels(labels);
        let score = posterior_logscore(&a, reps, cfg);
        out.push((a, score));
    });
    let max = out.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = out.iter().map(|(_, s)| (s - max).exp()).sum();
    for (_, s) in &mut out {
        *s = (*s - max).exp() / total;
    }
    Ok(out)
}
