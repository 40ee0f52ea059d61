//! Numerical self-checks of the Bayesian components.
//!
//! Each check compares a closed form or a sampler against an independent
//! computation: brute-force enumeration, adaptive quadrature, plain Monte
//! Carlo, or forward simulation of the prior. The `validate` command prints
//! these; the acceptance tests reuse them.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::dpmm::{
    cluster_log_marginal, crp_conditional_logprobs, crp_joint_logprior, for_each_set_partition, Assignment,
    ClusterStats, DpConfig,
};
use crate::error::Result;
use crate::sampler::{enumerate_posterior, run_chain, SamplerConfig};
use crate::seed::SimRng;

/// How much work `run_checks` does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// Reduced sample sizes; finishes in seconds.
    Fast,
    /// Full sample sizes.
    Full,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fast" => Ok(Self::Fast),
            "full" => Ok(Self::Full),
            other => Err(format!("unknown validation level `{other}` (expected fast or full)")),
        }
    }
}

/// One named check: `value` is compared against `threshold` (smaller is
/// better unless stated in the name).
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value <= threshold }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<44} value={:.3e} threshold={:.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Worst discrepancies over every partition of up to `max_m` items:
/// `(joint prior vs. product of sequential conditionals, |total mass - 1|)`,
/// both in the log domain / probability scale respectively.
pub fn crp_exactness(max_m: usize, alphas: &[f64]) -> (f64, f64) {
    let mut worst_seq = 0.0f64;
    let mut worst_mass = 0.0f64;
    for &alpha in alphas {
        for m in 1..=max_m {
            let mut mass = 0.0;
            for_each_set_partition(m, |labels| {
                let joint = crp_joint_logprior(&Assignment::from_labels(labels), alpha);
                let mut sizes: Vec<usize> = Vec::new();
                let mut seq = 0.0;
                for &l in labels {
                    seq += crp_conditional_logprobs(&sizes, alpha)[l.min(sizes.len())];
                    if l == sizes.len() {
                        sizes.push(1);
                    } else {
                        sizes[l] += 1;
                    }
                }
                worst_seq = worst_seq.max((joint - seq).abs());
                mass += joint.exp();
            });
            worst_mass = worst_mass.max((mass - 1.0).abs());
        }
    }
    (worst_seq, worst_mass)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 48)
}

fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

/// Log evidence of `points` as one cluster, computed by integrating the
/// component mean out numerically, one coordinate at a time (the spherical
/// model factorises over coordinates).
pub fn quadrature_log_marginal(points: &[Vec<f64>], cfg: &DpConfig) -> f64 {
    let dim = points.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for k in 0..dim {
        let xs: Vec<f64> = points.iter().map(|p| p[k]).collect();
        let m0 = cfg.mu0(k);
        let log_f = |mu: f64| -> f64 {
            ln_normal_pdf(mu, m0, cfg.sigma0_sq) + xs.iter().map(|&x| ln_normal_pdf(x, mu, cfg.sigma_sq)).sum::<f64>()
        };
        // Centre and width only steer the integration window.
        let n = xs.len() as f64;
        let precision = 1.0 / cfg.sigma0_sq + n / cfg.sigma_sq;
        let centre = (m0 / cfg.sigma0_sq + xs.iter().sum::<f64>() / cfg.sigma_sq) / precision;
        let half_width = 14.0 / precision.sqrt();
        let peak = log_f(centre);
        let integral =
            adaptive_simpson(&|mu| (log_f(mu) - peak).exp(), centre - half_width, centre + half_width, 1e-13);
        total += peak + integral.ln();
    }
    total
}

/// A Monte Carlo estimate on the probability scale, multiplied by
/// `exp(-log_scale)` to keep it representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub log_scale: f64,
}

/// Estimates the cluster evidence by averaging the likelihood over draws of
/// the component mean from its prior.
pub fn monte_carlo_marginal<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    cfg: &DpConfig,
    samples: usize,
    rng: &mut R,
) -> ScaledEstimate {
    let dim = points.first().map_or(0, Vec::len);
    let log_lik = |mu: &[f64]| -> f64 {
        points.iter().flat_map(|p| p.iter().zip(mu).map(|(&x, &m)| ln_normal_pdf(x, m, cfg.sigma_sq))).sum()
    };
    let centroid: Vec<f64> =
        (0..dim).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / points.len() as f64).collect();
    let log_scale = log_lik(&centroid);
    let prior = Normal::new(0.0, cfg.sigma0_sq.sqrt()).expect("positive prior variance");
    let mut mu = vec![0.0; dim];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for (k, m) in mu.iter_mut().enumerate() {
            *m = cfg.mu0(k) + prior.sample(rng);
        }
        let w = (log_lik(&mu) - log_scale).exp();
        sum += w;
        sum_sq += w * w;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    ScaledEstimate { mean, std_error: (var / n).sqrt(), log_scale }
}

/// Draws a random small clustering problem: points around `groups` random
/// centres in `dim` dimensions.
pub fn random_points<R: Rng + ?Sized>(m: usize, dim: usize, groups: usize, spread: f64, noise: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let centre_dist = Normal::new(0.0, spread).expect("finite spread");
    let noise_dist = Normal::new(0.0, noise).expect("finite noise");
    let centres: Vec<Vec<f64>> =
        (0..groups.max(1)).map(|_| (0..dim).map(|_| centre_dist.sample(rng)).collect()).collect();
    (0..m)
        .map(|i| centres[i % centres.len()].iter().map(|c| c + noise_dist.sample(rng)).collect())
        .collect()
}

/// Total-variation distance between the partition frequencies visited by
/// the chain and the exact posterior.
///
/// After `burn_in` chain steps, records the state every `thin` steps until
/// `samples` states are collected. One step is one call to `run_chain`
/// with `sm`.
pub fn chain_tv_distance<R: Rng + ?Sized>(
    reps: &[Vec<f64>],
    cfg: &DpConfig,
    sm: &SamplerConfig,
    samples: usize,
    thin: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<f64> {
    let exact = enumerate_posterior(reps, cfg)?;
    let mut state = Assignment::singletons(reps.len());
    for _ in 0..burn_in {
        state = run_chain(reps, cfg, sm, rng, state).assignment;
    }
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..samples {
        for _ in 0..thin.max(1) {
            state = run_chain(reps, cfg, sm, rng, state).assignment;
        }
        *counts.entry(state.labels().to_vec()).or_insert(0) += 1;
    }
    let n = samples as f64;
    let tv = 0.5
        * exact
            .iter()
            .map(|(a, p)| (counts.get(a.labels()).copied().unwrap_or(0) as f64 / n - p).abs())
            .sum::<f64>();
    Ok(tv)
}

/// Mean number of occupied tables after seating `m` customers by the
/// Chinese restaurant process, over `draws` independent simulations.
pub fn crp_mean_clusters<R: Rng + ?Sized>(m: usize, alpha: f64, draws: usize, rng: &mut R) -> f64 {
    let mut total = 0usize;
    for _ in 0..draws {
        let mut k = 0;
        for i in 0..m {
            if rng.random::<f64>() * (i as f64 + alpha) < alpha {
                k += 1;
            }
        }
        total += k;
    }
    total as f64 / draws as f64
}

fn random_config<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DpConfig {
    DpConfig {
        alpha: 1.0,
        mu0: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        sigma0_sq: rng.random_range(0.5..2.0),
        sigma_sq: rng.random_range(0.3..2.0),
    }
}

/// Runs the self-check suite.
pub fn run_checks(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let (seq, mass) = crp_exactness(8, &[0.5, 1.0, 2.0]);
    checks.push(Check::at_most("crp joint vs sequential |dlog| (M<=8)", seq, 1e-9));
    checks.push(Check::at_most("crp normalisation |sum p - 1| (M<=8)", mass, 1e-9));

    let mut worst_quad = 0.0f64;
    for _ in 0..10 {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(1..=6);
        let cfg = random_config(&mut rng, dim);
        let pts = random_points(n, dim, 1, 1.0, 1.0, &mut rng);
        let closed = cluster_log_marginal(&ClusterStats::from_points(dim, pts.iter().map(Vec::as_slice)), &cfg);
        worst_quad = worst_quad.max((closed - quadrature_log_marginal(&pts, &cfg)).abs());
    }
    checks.push(Check::at_most("marginal closed form vs quadrature |dlog|", worst_quad, 1e-6));

    let mc_samples = match level {
        Level::Fast => 100_000,
        Level::Full => 1_000_000,
    };
    let cfg = random_config(&mut rng, 3);
    let pts = random_points(3, 3, 1, 1.0, 1.0, &mut rng);
    let closed = cluster_log_marginal(&ClusterStats::from_points(3, pts.iter().map(Vec::as_slice)), &cfg);
    let mc = monte_carlo_marginal(&pts, &cfg, mc_samples, &mut rng);
    let z = ((closed - mc.log_scale).exp() - mc.mean).abs() / mc.std_error;
    checks.push(Check::at_most("marginal closed form vs d=3 Monte Carlo (SE)", z, 3.0));

    let mean_k = crp_mean_clusters(10, 1.0, 100_000, &mut rng);
    let harmonic: f64 = (1..=10).map(|i| 1.0 / i as f64).sum();
    checks.push(Check::at_most("crp E[K] M=10 a=1 relative error", (mean_k - harmonic).abs() / harmonic, 0.02));

    let (instances, samples) = match level {
        Level::Fast => (1, 10_000),
        Level::Full => (5, 50_000),
    };
    let sm = SamplerConfig { n_split_merge: 1, n_gibbs_sweeps: 1, ..SamplerConfig::default() };
    let mut worst_tv = 0.0f64;
    for i in 0..instances {
        let (reps, cfg) = stationarity_instance(i, &mut rng);
        worst_tv = worst_tv.max(chain_tv_distance(&reps, &cfg, &sm, samples, 2, 1000, &mut rng)?);
    }
    checks.push(Check::at_most(format!("split-merge+gibbs TV vs enumeration ({instances} inst)"), worst_tv, 0.05));
    if level == Level::Full {
        let sm_only = SamplerConfig { n_split_merge: 1, n_gibbs_sweeps: 0, ..SamplerConfig::default() };
        let (reps, cfg) = stationarity_instance(0, &mut rng);
        let tv = chain_tv_distance(&reps, &cfg, &sm_only, samples, 3, 1000, &mut rng)?;
        checks.push(Check::at_most("split-merge only TV vs enumeration", tv, 0.05));
    }
    Ok(checks)
}

/// The `i`-th small instance used by the stationarity checks: M cycles
/// through 5, 6, 7 and the dimension alternates between 1 and 2.
pub fn stationarity_instance<R: Rng + ?Sized>(i: usize, rng: &mut R) -> (Vec<Vec<f64>>, DpConfig) {
    let m = 5 + i % 3;
    let dim = 1 + i % 2;
    let reps = random_points(m, dim, 2, 1.5, 0.6, rng);
    let cfg = DpConfig { alpha: 1.0, mu0: Vec::new(), sigma0_sq: 2.0, sigma_sq: 0.5 };
    (reps, cfg)
}
