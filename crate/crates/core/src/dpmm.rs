//! Probabilistic kernel of the Dirichlet-process mixture.
//!
//! Partitions are scored by the Chinese-restaurant-process prior times the
//! product of per-cluster marginal likelihoods. Every cluster is a spherical
//! Gaussian `N(mu, sigma_sq I)` whose mean is integrated out against the base
//! measure `N(mu0, sigma0_sq I)`, so a cluster's evidence depends on its
//! members only through [`ClusterStats`].

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Concentration and Gaussian hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    #[serde(default = "DpConfig::default_alpha")]
    pub alpha: f64,
    /// Base-measure mean. Empty means the zero vector of the data dimension.
    #[serde(default)]
    pub mu0: Vec<f64>,
    #[serde(default = "DpConfig::default_var")]
    pub sigma0_sq: f64,
    #[serde(default = "DpConfig::default_var")]
    pub sigma_sq: f64,
}

impl DpConfig {
    fn default_alpha() -> f64 {
        1.0
    }
    fn default_var() -> f64 {
        1.0
    }

    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("dp.alpha must be positive".into()));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::InvalidConfig("dp.sigma0_sq must be positive".into()));
        }
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::InvalidConfig("dp.sigma_sq must be positive".into()));
        }
        if self.mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("dp.mu0 must be finite".into()));
        }
        Ok(())
    }

    /// Prior mean of coordinate `k` (an empty `mu0` means the origin).
    pub fn mu0(&self, k: usize) -> f64 {
        self.mu0.get(k).copied().unwrap_or(0.0)
    }
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            alpha: Self::default_alpha(),
            mu0: Vec::new(),
            sigma0_sq: Self::default_var(),
            sigma_sq: Self::default_var(),
        }
    }
}

/// A partition of `M` items into `K` nonempty clusters, labelled in order of
/// first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Assignment {
    /// Builds a canonical assignment from arbitrary integer labels.
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut labels = Vec::with_capacity(raw.len());
        let mut sizes = Vec::new();
        for &r in raw {
            let next = map.len();
            let k = *map.entry(r).or_insert(next);
            if k == sizes.len() {
                sizes.push(0);
            }
            sizes[k] += 1;
            labels.push(k);
        }
        Self { labels, sizes }
    }

    /// Everyone in one cluster.
    pub fn single(m: usize) -> Self {
        Self::from_labels(&vec![0; m])
    }

    pub fn singletons(m: usize) -> Self {
        Self::from_labels(&(0..m).collect::<Vec<_>>())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self, k: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == k).map(|(i, _)| i).collect()
    }

    /// Checks canonical numbering, nonempty clusters and size bookkeeping.
    pub fn is_valid(&self) -> bool {
        let mut seen = 0;
        let mut counts = vec![0usize; self.sizes.len()];
        for &l in &self.labels {
            if l > seen || l >= self.sizes.len() {
                return false;
            }
            if l == seen {
                seen += 1;
            }
            counts[l] += 1;
        }
        seen == self.sizes.len() && counts == self.sizes && counts.iter().all(|&c| c > 0)
    }
}

/// Sufficient statistics of one cluster: count, coordinate sums and the sum
/// of squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub n: usize,
    pub sum: Vec<f64>,
    pub sumsq: f64,
}

impl ClusterStats {
    pub fn empty(dim: usize) -> Self {
        Self { n: 0, sum: vec![0.0; dim], sumsq: 0.0 }
    }

    pub fn from_points<'a>(dim: usize, points: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut s = Self::empty(dim);
        for p in points {
            s.add(p);
        }
        s
    }

    pub fn add(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.sum.len());
        self.n += 1;
        self.sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
        self.sumsq += x.iter().map(|v| v * v).sum::<f64>();
    }

    pub fn remove(&mut self, x: &[f64]) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyStats);
        }
        self.n -= 1;
        if self.n == 0 {
            self.sum.iter_mut().for_each(|s| *s = 0.0);
            self.sumsq = 0.0;
        } else {
            self.sum.iter_mut().zip(x).for_each(|(s, v)| *s -= v);
            self.sumsq = (self.sumsq - x.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        }
        Ok(())
    }

    pub fn merged(&self, other: &ClusterStats) -> ClusterStats {
        ClusterStats {
            n: self.n + other.n,
            sum: self.sum.iter().zip(&other.sum).map(|(a, b)| a + b).collect(),
            sumsq: self.sumsq + other.sumsq,
        }
    }
}

/// Sequential CRP log-probabilities of joining each existing cluster (in
/// order) or, in the last slot, opening a new one.
pub fn crp_conditional_logprobs(sizes: &[usize], alpha: f64) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    let log_denom = (total as f64 + alpha).ln();
    sizes
        .iter()
        .map(|&m| (m as f64).ln() - log_denom)
        .chain(std::iter::once(alpha.ln() - log_denom))
        .collect()
}

/// Log of `Gamma(alpha) / Gamma(alpha + M) * alpha^K * prod_k Gamma(m_k)`.
pub fn crp_joint_logprior(a: &Assignment, alpha: f64) -> f64 {
    let m = a.len() as f64;
    ln_gamma(alpha) - ln_gamma(alpha + m)
        + a.num_clusters() as f64 * alpha.ln()
        + a.sizes().iter().map(|&s| ln_gamma(s as f64)).sum::<f64>()
}

/// Log evidence of a cluster with the component mean integrated out.
///
/// Returns 0 for an empty cluster.
pub fn cluster_log_marginal(stats: &ClusterStats, cfg: &DpConfig) -> f64 {
    if stats.n == 0 {
        return 0.0;
    }
    let n = stats.n as f64;
    let d = stats.sum.len() as f64;
    let precision = 1.0 / cfg.sigma0_sq + n / cfg.sigma_sq;
    let mut mu0_sq = 0.0;
    let mut quad = 0.0;
    for (k, s) in stats.sum.iter().enumerate() {
        let m0 = cfg.mu0(k);
        mu0_sq += m0 * m0;
        let h = m0 / cfg.sigma0_sq + s / cfg.sigma_sq;
        quad += h * h;
    }
    -0.5 * n * d * (LN_2PI + cfg.sigma_sq.ln()) - 0.5 * d * (cfg.sigma0_sq * precision).ln()
        - stats.sumsq / (2.0 * cfg.sigma_sq)
        - mu0_sq / (2.0 * cfg.sigma0_sq)
        + quad / (2.0 * precision)
}

/// Per-cluster statistics of an assignment.
pub fn cluster_stats(a: &Assignment, reps: &[Vec<f64>]) -> Vec<ClusterStats> {
    let dim = reps.first().map_or(0, Vec::len);
    let mut stats = vec![ClusterStats::empty(dim); a.num_clusters()];
    for (i, &l) in a.labels().iter().enumerate() {
        stats[l].add(&reps[i]);
    }
    stats
}

/// Unnormalised log posterior of an assignment given the representations.
pub fn posterior_logscore(a: &Assignment, reps: &[Vec<f64>], cfg: &DpConfig) -> f64 {
    crp_joint_logprior(a, cfg.alpha)
        + cluster_stats(a, reps).iter().map(|s| cluster_log_marginal(s, cfg)).sum::<f64>()
}

/// Calls `f` with every set partition of `m` items as a canonical label
/// vector (restricted growth strings, lexicographic order).
pub fn for_each_set_partition(m: usize, mut f: impl FnMut(&[usize])) {
    if m == 0 {
        f(&[]);
        return;
    }
    let mut labels = vec![0usize; m];
    // max_prefix[i] = max(labels[..i]) for i >= 1
    let mut max_prefix = vec![0usize; m];
    loop {
        f(&labels);
        let mut i = m - 1;
        loop {
            if i == 0 {
                return;
            }
            if labels[i] <= max_prefix[i] {
                labels[i] += 1;
                break;
            }
            i -= 1;
        }
        for k in i + 1..m {
            max_prefix[k] = max_prefix[k - 1].max(labels[k - 1]);
            labels[k] = 0;
        }
    }
}

/// Standardises each column to zero mean and unit (population) variance.
/// Columns with no spread become all zero.
pub fn zscore_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len();
    if m == 0 {
        return Vec::new();
    }
    let d = rows[0].len();
    let mut out = vec![vec![0.0; d]; m];
    for k in 0..d {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / m as f64;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / m as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            for (o, r) in out.iter_mut().zip(rows) {
                o[k] = (r[k] - mean) / sd;
            }
        }
    }
    out
}
