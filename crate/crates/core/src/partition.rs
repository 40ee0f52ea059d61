//! Synthetic label-skewed client datasets.
//!
//! A Gaussian class pool is split into `num_clusters` latent client groups
//! and then into `num_clients` clients, either by two-level Dirichlet label
//! skew or by class-subset assignment. Each client's ground-truth group is
//! kept for cluster-recovery scoring.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabeledDataset;

const MAX_RETRIES: usize = 100;
const MAX_COVER_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    #[serde(default = "PoolSpec::default_classes")]
    pub num_classes: usize,
    #[serde(default = "PoolSpec::default_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "PoolSpec::default_dim")]
    pub feature_dim: usize,
    /// Distance between neighbouring class means.
    #[serde(default = "PoolSpec::default_sep")]
    pub class_separation: f64,
    #[serde(default = "PoolSpec::default_noise")]
    pub noise_sd: f64,
}

impl PoolSpec {
    fn default_classes() -> usize {
        10
    }
    fn default_per_class() -> usize {
        300
    }
    fn default_dim() -> usize {
        2
    }
    fn default_sep() -> f64 {
        2.0
    }
    fn default_noise() -> f64 {
        1.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_classes < 2 {
            return bad("pool.num_classes must be >= 2");
        }
        if self.samples_per_class == 0 {
            return bad("pool.samples_per_class must be >= 1");
        }
        if self.feature_dim == 0 {
            return bad("pool.feature_dim must be >= 1");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("pool.class_separation must be finite and >= 0");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("pool.noise_sd must be finite and >= 0");
        }
        Ok(())
    }

    /// Class means on a circle in the first two coordinates (a line when the
    /// features are one-dimensional), neighbours `class_separation` apart.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let c = self.num_classes;
        (0..c)
            .map(|k| {
                let mut mu = vec![0.0; self.feature_dim];
                if self.feature_dim == 1 {
                    mu[0] = self.class_separation * (k as f64 - (c as f64 - 1.0) / 2.0);
                } else {
                    let radius = self.class_separation / (2.0 * (std::f64::consts::PI / c as f64).sin());
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / c as f64;
                    mu[0] = radius * angle.cos();
                    mu[1] = radius * angle.sin();
                }
                mu
            })
            .collect()
    }
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            num_classes: Self::default_classes(),
            samples_per_class: Self::default_per_class(),
            feature_dim: Self::default_dim(),
            class_separation: Self::default_sep(),
            noise_sd: Self::default_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Dirichlet,
    ClassSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub scheme: Scheme,
    #[serde(default = "PartitionSpec::default_clusters")]
    pub num_clusters: usize,
    #[serde(default = "PartitionSpec::default_clients")]
    pub num_clients: usize,
    #[serde(default = "PartitionSpec::default_alpha_inter")]
    pub alpha_inter: f64,
    #[serde(default = "PartitionSpec::default_alpha_intra")]
    pub alpha_intra: f64,
    #[serde(default = "PartitionSpec::default_cpc")]
    pub classes_per_cluster: usize,
    #[serde(default = "PartitionSpec::default_cpcl")]
    pub classes_per_client: usize,
    #[serde(default = "PartitionSpec::default_test")]
    pub test_fraction: f64,
}

impl PartitionSpec {
    fn default_clusters() -> usize {
        4
    }
    fn default_clients() -> usize {
        60
    }
    fn default_alpha_inter() -> f64 {
        0.1
    }
    fn default_alpha_intra() -> f64 {
        10.0
    }
    fn default_cpc() -> usize {
        3
    }
    fn default_cpcl() -> usize {
        2
    }
    fn default_test() -> f64 {
        0.2
    }

    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            num_clusters: Self::default_clusters(),
            num_clients: Self::default_clients(),
            alpha_inter: Self::default_alpha_inter(),
            alpha_intra: Self::default_alpha_intra(),
            classes_per_cluster: Self::default_cpc(),
            classes_per_client: Self::default_cpcl(),
            test_fraction: Self::default_test(),
        }
    }

    pub fn clients_per_cluster(&self) -> usize {
        self.num_clients / self.num_clusters
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_clusters == 0 {
            return bad("partition.num_clusters must be >= 1");
        }
        if self.num_clients == 0 {
            return bad("partition.num_clients must be >= 1");
        }
        if !self.num_clients.is_multiple_of(self.num_clusters) {
            return bad("partition.num_clients must be a multiple of partition.num_clusters");
        }
        if !(self.alpha_inter > 0.0 && self.alpha_inter.is_finite()) {
            return bad("partition.alpha_inter must be positive and finite");
        }
        if !(self.alpha_intra > 0.0 && self.alpha_intra.is_finite()) {
            return bad("partition.alpha_intra must be positive and finite");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("partition.test_fraction must lie in (0, 1)");
        }
        if self.scheme == Scheme::ClassSplit {
            if !(1 <= self.classes_per_client && self.classes_per_client <= self.classes_per_cluster) {
                return bad("partition.classes_per_client must lie in [1, classes_per_cluster]");
            }
            if self.classes_per_cluster > num_classes {
                return bad("partition.classes_per_cluster must not exceed pool.num_classes");
            }
            if self.num_clusters * self.classes_per_cluster < num_classes {
                return bad("partition.classes_per_cluster is too small for the clusters to cover every class");
            }
            if self.clients_per_cluster() * self.classes_per_client < self.classes_per_cluster {
                return bad("partition.classes_per_client is too small for the clients to cover their cluster's classes");
            }
        }
        Ok(())
    }
}

/// One client's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub clients: Vec<ClientData>,
    pub ground_truth: Vec<usize>,
}

impl ClientPartition {
    pub fn total_samples(&self) -> usize {
        self.clients.iter().map(|c| c.train.len() + c.test.len()).sum()
    }
}

/// Draws `samples_per_class` Gaussian samples around each class mean.
pub fn generate_pool<R: Rng + ?Sized>(spec: &PoolSpec, rng: &mut R) -> LabeledDataset {
    let means = spec.class_means();
    let noise = Normal::new(0.0, spec.noise_sd).expect("non-negative sd");
    let mut pool = LabeledDataset::empty(spec.feature_dim);
    let mut row = vec![0.0; spec.feature_dim];
    for (c, mu) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            for (r, m) in row.iter_mut().zip(mu) {
                *r = m + noise.sample(rng);
            }
            pool.push(&row, c);
        }
    }
    pool
}

/// Dirichlet draw; zero concentrations yield zero components. Gamma variates
/// are drawn in log space so very small concentrations do not underflow.
pub fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = conc
        .iter()
        .map(|&a| {
            if a <= 0.0 {
                f64::NEG_INFINITY
            } else {
                // G(a) = G(a + 1) * U^(1/a)
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Splits `n` items proportionally to `weights` by largest remainder.
/// All-zero weights fall back to an even split.
fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let uniform;
    let weights = if total > 0.0 && total.is_finite() {
        weights
    } else {
        uniform = vec![1.0; weights.len()];
        &uniform[..]
    };
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

/// Splits `n` items evenly; the first `n % parts` parts get one extra.
fn even_split(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|p| n / parts + usize::from(p < n % parts)).collect()
}

fn shuffled_class_indices<R: Rng + ?Sized>(pool: &LabeledDataset, num_classes: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in pool.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class.iter_mut().for_each(|v| v.shuffle(rng));
    by_class
}

fn pool_classes(pool: &LabeledDataset) -> usize {
    pool.labels.iter().copied().max().map_or(0, |m| m + 1)
}

fn finish<R: Rng + ?Sized>(
    pool: &LabeledDataset,
    client_indices: Vec<Vec<usize>>,
    ground_truth: Vec<usize>,
    test_fraction: f64,
    rng: &mut R,
) -> Result<ClientPartition> {
    let clients = client_indices
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            let (train, test) = train_test_split(&pool.subset(&idx), test_fraction, rng)?;
            Ok(ClientData { train, test })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClientPartition { clients, ground_truth })
}

/// Two-level Dirichlet label skew: cluster class mixtures with concentration
/// `alpha_inter`, then client mixtures around each cluster's mixture with
/// concentration `alpha_intra`.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    pool: &LabeledDataset,
    pspec: &PartitionSpec,
    rng: &mut R,
) -> Result<ClientPartition> {
    let num_classes = pool_classes(pool);
    pspec.validate(num_classes)?;
    let k_true = pspec.num_clusters;
    let per = pspec.clients_per_cluster();
    let by_class = shuffled_class_indices(pool, num_classes, rng);

    let mut props: Vec<Vec<f64>> =
        (0..k_true).map(|_| sample_dirichlet(&vec![pspec.alpha_inter; num_classes], rng)).collect();
    let mut retries = 0;
    let alloc = loop {
        // alloc[c][k]: samples of class c routed to cluster k
        let alloc: Vec<Vec<usize>> = (0..num_classes)
            .map(|c| {
                let w: Vec<f64> = props.iter().map(|p| p[c]).collect();
                largest_remainder(by_class[c].len(), &w)
            })
            .collect();
        let starving: Vec<usize> =
            (0..k_true).filter(|&k| alloc.iter().map(|a| a[k]).sum::<usize>() < 2 * per).collect();
        if starving.is_empty() {
            break alloc;
        }
        retries += 1;
        if retries > MAX_RETRIES {
            return Err(Error::DegeneratePartition("a cluster received too few samples".into()));
        }
        for k in starving {
            props[k] = sample_dirichlet(&vec![pspec.alpha_inter; num_classes], rng);
        }
    };

    let mut client_indices = Vec::with_capacity(pspec.num_clients);
    let mut ground_truth = Vec::with_capacity(pspec.num_clients);
    let mut cursor = vec![0usize; num_classes];
    for k in 0..k_true {
        let cluster_counts: Vec<usize> = (0..num_classes).map(|c| alloc[c][k]).collect();
        let n_k: usize = cluster_counts.iter().sum();
        let conc: Vec<f64> =
            cluster_counts.iter().map(|&n| pspec.alpha_intra * n as f64 / n_k as f64).collect();
        let mut retries = 0;
        let client_alloc = loop {
            let q: Vec<Vec<f64>> = (0..per).map(|_| sample_dirichlet(&conc, rng)).collect();
            // client_alloc[c][j]
            let client_alloc: Vec<Vec<usize>> = (0..num_classes)
                .map(|c| {
                    let w: Vec<f64> = q.iter().map(|qj| qj[c]).collect();
                    largest_remainder(cluster_counts[c], &w)
                })
                .collect();
            if (0..per).all(|j| client_alloc.iter().map(|a| a[j]).sum::<usize>() >= 2) {
                break client_alloc;
            }
            retries += 1;
            if retries > MAX_RETRIES {
                return Err(Error::DegeneratePartition(format!("cluster {k} left a client with < 2 samples")));
            }
        };
        let mut members = vec![Vec::new(); per];
        for c in 0..num_classes {
            for (j, &cnt) in client_alloc[c].iter().enumerate() {
                members[j].extend_from_slice(&by_class[c][cursor[c]..cursor[c] + cnt]);
                cursor[c] += cnt;
            }
        }
        client_indices.extend(members);
        ground_truth.extend(std::iter::repeat_n(k, per));
    }
    finish(pool, client_indices, ground_truth, pspec.test_fraction, rng)
}

/// Class-subset partition: every cluster holds `classes_per_cluster` random
/// classes and each of its clients holds `classes_per_client` of those.
/// Subsets are redrawn until every pool class belongs to some cluster and
/// every cluster class to some client, so the pool is split without loss.
pub fn class_split_partition<R: Rng + ?Sized>(
    pool: &LabeledDataset,
    pspec: &PartitionSpec,
    rng: &mut R,
) -> Result<ClientPartition> {
    let num_classes = pool_classes(pool);
    pspec.validate(num_classes)?;
    let k_true = pspec.num_clusters;
    let per = pspec.clients_per_cluster();
    let (cpc, cpcl) = (pspec.classes_per_cluster, pspec.classes_per_client);

    let mut draw = None;
    for _ in 0..MAX_COVER_RETRIES {
        let cluster_classes: Vec<Vec<usize>> =
            (0..k_true).map(|_| index::sample(rng, num_classes, cpc).into_vec()).collect();
        let client_classes: Vec<Vec<Vec<usize>>> = cluster_classes
            .iter()
            .map(|cls| (0..per).map(|_| index::sample(rng, cpc, cpcl).iter().map(|t| cls[t]).collect()).collect())
            .collect();
        let pool_covered = (0..num_classes).all(|c| cluster_classes.iter().any(|cls| cls.contains(&c)));
        let clients_cover = cluster_classes
            .iter()
            .zip(&client_classes)
            .all(|(cls, clients)| cls.iter().all(|c| clients.iter().any(|cl| cl.contains(c))));
        if pool_covered && clients_cover {
            draw = Some((cluster_classes, client_classes));
            break;
        }
    }
    let (cluster_classes, client_classes) =
        draw.ok_or_else(|| Error::DegeneratePartition("no covering class assignment found".into()))?;

    let by_class = shuffled_class_indices(pool, num_classes, rng);
    let mut client_indices = vec![Vec::new(); pspec.num_clients];
    for (c, indices) in by_class.iter().enumerate() {
        let holders: Vec<usize> = (0..k_true).filter(|&k| cluster_classes[k].contains(&c)).collect();
        let mut start = 0;
        for (&k, share) in holders.iter().zip(even_split(indices.len(), holders.len())) {
            let chunk = &indices[start..start + share];
            start += share;
            let clients: Vec<usize> = (0..per).filter(|&j| client_classes[k][j].contains(&c)).collect();
            let mut s = 0;
            for (&j, n) in clients.iter().zip(even_split(chunk.len(), clients.len())) {
                client_indices[k * per + j].extend_from_slice(&chunk[s..s + n]);
                s += n;
            }
        }
    }
    if let Some(j) = client_indices.iter().position(|v| v.len() < 2) {
        return Err(Error::DegeneratePartition(format!("client {j} holds fewer than 2 samples")));
    }
    let ground_truth = (0..k_true).flat_map(|k| std::iter::repeat_n(k, per)).collect();
    finish(pool, client_indices, ground_truth, pspec.test_fraction, rng)
}

/// Dispatches on `pspec.scheme`.
pub fn partition_clients<R: Rng + ?Sized>(
    pool: &LabeledDataset,
    pspec: &PartitionSpec,
    rng: &mut R,
) -> Result<ClientPartition> {
    match pspec.scheme {
        Scheme::Dirichlet => dirichlet_partition(pool, pspec, rng),
        Scheme::ClassSplit => class_split_partition(pool, pspec, rng),
    }
}

/// Label-stratified split with `ceil(n * test_fraction)` test rows (at
/// least one and at most `n - 1`).
pub fn train_test_split<R: Rng + ?Sized>(
    data: &LabeledDataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test_fraction must lie in (0, 1)".into()));
    }
    let n_test = ((n as f64 * test_fraction).ceil() as usize).clamp(1, n - 1);
    let width = pool_classes(data);
    let mut groups = vec![Vec::new(); width];
    for (i, &l) in data.labels.iter().enumerate() {
        groups[l].push(i);
    }
    let weights: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let quotas = largest_remainder(n_test, &weights);
    let mut is_test = vec![false; n];
    for (g, q) in groups.iter_mut().zip(quotas) {
        g.shuffle(rng);
        g.iter().take(q).for_each(|&i| is_test[i] = true);
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i]);
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

/// Writes the partition as comma-separated rows
/// `client_id,cluster_id,split,label,x0,..,x{d-1}` with a header line.
pub fn write_partition<W: Write>(part: &ClientPartition, mut out: W) -> std::io::Result<()> {
    let dim = part.clients.first().map_or(0, |c| c.train.dim);
    let mut header = String::from("client_id,cluster_id,split,label");
    for k in 0..dim {
        write!(header, ",x{k}").unwrap();
    }
    writeln!(out, "{header}")?;
    for (id, client) in part.clients.iter().enumerate() {
        for (split, ds) in [("train", &client.train), ("test", &client.test)] {
            for i in 0..ds.len() {
                let mut line = format!("{id},{},{split},{}", part.ground_truth[id], ds.labels[i]);
                for v in ds.row(i) {
                    // `{:?}` prints the shortest string that round-trips.
                    write!(line, ",{v:?}").unwrap();
                }
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Reads a file produced by [`write_partition`].
pub fn read_partition<B: BufRead>(input: B) -> Result<ClientPartition> {
    let bad = |line: usize, msg: &str| Error::PartitionFile { line, msg: msg.to_string() };
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        _ => return Err(bad(1, "missing header")),
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..4] != ["client_id", "cluster_id", "split", "label"] {
        return Err(bad(1, "unexpected header"));
    }
    let dim = cols.len() - 4;
    let mut clients: Vec<ClientData> = Vec::new();
    let mut ground_truth: Vec<usize> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| bad(lineno, &e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 4 {
            return Err(bad(lineno, "wrong number of fields"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(lineno, "expected an integer"));
        let id = parse_usize(fields[0])?;
        let cluster = parse_usize(fields[1])?;
        let label = parse_usize(fields[3])?;
        let row = fields[4..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(lineno, "expected a number")))
            .collect::<Result<Vec<_>>>()?;
        if id >= clients.len() {
            clients.resize(id + 1, ClientData { train: LabeledDataset::empty(dim), test: LabeledDataset::empty(dim) });
            ground_truth.resize(id + 1, usize::MAX);
        }
        if ground_truth[id] != usize::MAX && ground_truth[id] != cluster {
            return Err(bad(lineno, "client listed under two clusters"));
        }
        ground_truth[id] = cluster;
        match fields[2] {
            "train" => clients[id].train.push(&row, label),
            "test" => clients[id].test.push(&row, label),
            _ => return Err(bad(lineno, "split must be train or test")),
        }
    }
    if ground_truth.contains(&usize::MAX) {
        return Err(bad(0, "client ids are not contiguous"));
    }
    Ok(ClientPartition { clients, ground_truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    fn sorted_rows(ds: &LabeledDataset) -> Vec<(usize, Vec<u64>)> {
        let mut rows: Vec<(usize, Vec<u64>)> =
            (0..ds.len()).map(|i| (ds.labels[i], ds.row(i).iter().map(|v| v.to_bits()).collect())).collect();
        rows.sort();
        rows
    }

    fn union(part: &ClientPartition) -> LabeledDataset {
        let mut all = LabeledDataset::empty(part.clients[0].train.dim);
        for c in &part.clients {
            all.extend(&c.train);
            all.extend(&c.test);
        }
        all
    }

    #[test]
    fn pool_counts_and_degenerate_noise() {
        let spec = PoolSpec { num_classes: 10, samples_per_class: 100, noise_sd: 0.0, ..PoolSpec::default() };
        let pool = generate_pool(&spec, &mut SimRng::seed_from_u64(0));
        assert_eq!(pool.len(), 1000);
        assert!(pool.label_counts(10).iter().all(|&c| c == 100));
        let means = spec.class_means();
        for i in 0..pool.len() {
            assert_eq!(pool.row(i), means[pool.labels[i]].as_slice());
        }
    }

    #[test]
    fn neighbouring_means_are_separated() {
        let spec = PoolSpec { class_separation: 6.0, ..PoolSpec::default() };
        let m = spec.class_means();
        let d: f64 = m[0].iter().zip(&m[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((d - 6.0).abs() < 1e-9);
    }

    #[test]
    fn split_sizes_and_conservation() {
        let data = LabeledDataset::new(1, (0..10).map(f64::from).collect(), vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let (train, test) = train_test_split(&data, 0.2, &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(test.label_counts(2), vec![1, 1]);
        let mut both = train.clone();
        both.extend(&test);
        assert_eq!(sorted_rows(&both), sorted_rows(&data));
        let again = train_test_split(&data, 0.2, &mut SimRng::seed_from_u64(1)).unwrap();
        assert_eq!((train, test), again);
        assert_eq!(
            train_test_split(&LabeledDataset::new(1, vec![0.0], vec![0]), 0.5, &mut SimRng::seed_from_u64(0)),
            Err(Error::TooFewSamples(1))
        );
    }

    #[test]
    fn dirichlet_partition_conserves_pool() {
        let mut rng = SimRng::seed_from_u64(3);
        let pool = generate_pool(&PoolSpec::default(), &mut rng);
        let pspec = PartitionSpec::new(Scheme::Dirichlet);
        let part = dirichlet_partition(&pool, &pspec, &mut rng).unwrap();
        assert_eq!(part.clients.len(), 60);
        assert_eq!(part.total_samples(), pool.len());
        assert_eq!(sorted_rows(&union(&part)), sorted_rows(&pool));
        let mut gt = part.ground_truth.clone();
        gt.dedup();
        assert_eq!(gt, vec![0, 1, 2, 3]);
    }

    #[test]
    fn class_split_respects_class_sets() {
        let mut rng = SimRng::seed_from_u64(5);
        let pool = generate_pool(&PoolSpec::default(), &mut rng);
        let pspec = PartitionSpec { num_clients: 20, ..PartitionSpec::new(Scheme::ClassSplit) };
        let part = class_split_partition(&pool, &pspec, &mut rng).unwrap();
        assert_eq!(sorted_rows(&union(&part)), sorted_rows(&pool));
        for k in 0..4 {
            let mut cluster_labels = std::collections::BTreeSet::new();
            for (j, c) in part.clients.iter().enumerate().filter(|(j, _)| part.ground_truth[*j] == k) {
                let labels: std::collections::BTreeSet<usize> =
                    c.train.labels.iter().chain(&c.test.labels).copied().collect();
                assert!(labels.len() <= 2, "client {j} has {labels:?}");
                cluster_labels.extend(labels);
            }
            assert!(cluster_labels.len() <= 3);
        }
    }

    #[test]
    fn class_split_full_overlap_is_iid_like() {
        let mut rng = SimRng::seed_from_u64(5);
        let pool = generate_pool(&PoolSpec { num_classes: 4, samples_per_class: 40, ..PoolSpec::default() }, &mut rng);
        let pspec = PartitionSpec {
            num_clusters: 2,
            num_clients: 4,
            classes_per_cluster: 4,
            classes_per_client: 4,
            ..PartitionSpec::new(Scheme::ClassSplit)
        };
        let part = class_split_partition(&pool, &pspec, &mut rng).unwrap();
        for c in &part.clients {
            let mut all = c.train.clone();
            all.extend(&c.test);
            assert!(all.label_counts(4).iter().all(|&n| n > 0));
        }
    }

    #[test]
    fn class_split_rejects_uncoverable() {
        let mut rng = SimRng::seed_from_u64(0);
        let pool = generate_pool(&PoolSpec::default(), &mut rng);
        let pspec = PartitionSpec { num_clusters: 2, num_clients: 4, ..PartitionSpec::new(Scheme::ClassSplit) };
        assert!(matches!(class_split_partition(&pool, &pspec, &mut rng), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn largest_remainder_conserves() {
        assert_eq!(largest_remainder(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        assert_eq!(largest_remainder(3, &[0.0, 0.0]), vec![2, 1]);
        assert_eq!(largest_remainder(7, &[1.0, 1.0, 1.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn tiny_concentration_dirichlet_is_finite() {
        let mut rng = SimRng::seed_from_u64(0);
        for _ in 0..100 {
            let p = sample_dirichlet(&[0.01; 10], &mut rng);
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_file_round_trip() {
        let mut rng = SimRng::seed_from_u64(8);
        let pool = generate_pool(&PoolSpec { samples_per_class: 30, ..PoolSpec::default() }, &mut rng);
        let pspec = PartitionSpec { num_clients: 8, ..PartitionSpec::new(Scheme::Dirichlet) };
        let part = dirichlet_partition(&pool, &pspec, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_partition(&part, &mut buf).unwrap();
        let back = read_partition(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, part);
    }

    #[test]
    fn partition_file_errors_name_the_line() {
        let text = "client_id,cluster_id,split,label,x0\n0,0,train,1,0.5\n0,0,valid,1,0.5\n";
        match read_partition(std::io::Cursor::new(text)) {
            Err(Error::PartitionFile { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
