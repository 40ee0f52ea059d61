//! CSV traces and JSON summaries.

use std::collections::BTreeMap;
use std::path::Path;

use dpmm_cfl::metrics::{mean_sd, RoundRecord};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Header of the combined sweep table: the run header keyed by K and seed.
pub fn sweep_header() -> String {
    format!("K,seed,{}", RoundRecord::CSV_HEADER)
}

/// A run trace as CSV text, header included.
pub fn trace_csv(trace: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(RoundRecord::CSV_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Writes through a temporary sibling file and a rename, so readers never
/// see a partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, sd) = mean_sd(values);
        Self { mean, sd }
    }
}

/// Number of trailing rounds averaged for reported metrics.
pub const TAIL_ROUNDS: usize = 3;

fn tail_mean(trace: &[RoundRecord], field: impl Fn(&RoundRecord) -> f64) -> f64 {
    let tail = &trace[trace.len().saturating_sub(TAIL_ROUNDS)..];
    tail.iter().map(field).sum::<f64>() / tail.len() as f64
}

type Field = fn(&RoundRecord) -> f64;

/// Per-metric mean/sd across seeds of each seed's final-rounds average.
pub fn final_round_stats(traces: &[&[RoundRecord]]) -> BTreeMap<&'static str, Stat> {
    let fields: [(&'static str, Field); 8] = [
        ("acc_mean", |r| r.acc_mean),
        ("f1_mean", |r| r.f1_mean),
        ("ari", |r| r.ari),
        ("nmi", |r| r.nmi),
        ("K_t", |r| r.k as f64),
        ("logpost", |r| r.logpost),
        ("objective", |r| r.objective),
        ("acc_sd", |r| r.acc_sd),
    ];
    fields
        .iter()
        .map(|(name, f)| {
            let per_seed: Vec<f64> = traces.iter().map(|t| tail_mean(t, f)).collect();
            (*name, Stat::of(&per_seed))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_k: usize,
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub version: &'static str,
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub tail_rounds: usize,
    pub final_k: Vec<usize>,
    pub seeds: Vec<SeedResult>,
    pub metrics: BTreeMap<&'static str, Stat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    #[serde(rename = "K")]
    pub k: usize,
    pub metrics: BTreeMap<&'static str, Stat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub version: &'static str,
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub tail_rounds: usize,
    pub csv: String,
    pub points: Vec<SweepPoint>,
}
