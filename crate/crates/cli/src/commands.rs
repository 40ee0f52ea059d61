//! The `run`, `sweep` and `validate` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use dpmm_cfl::config::Algorithm;
use dpmm_cfl::federation::{build_partition, run_experiment};
use dpmm_cfl::metrics::RoundRecord;
use dpmm_cfl::partition::write_partition;
use dpmm_cfl::validation::{run_checks, Level};

use crate::config::ExperimentConfig;
use crate::output::{
    final_round_stats, sweep_header, trace_csv, write_atomic, RunSummary, SeedResult, SweepPoint, SweepSummary,
    TAIL_ROUNDS,
};
use crate::{CliError, OUT_DIR_ENV, VERSION};

/// `--out`, then the config's `run.out_dir`, then `$DPMM_CFL_OUT_DIR`,
/// then `./out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.run.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Dpmm => "dpmm",
        Algorithm::FixedK => "fixedk",
        Algorithm::Global => "global",
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// What a `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv_files: Vec<PathBuf>,
    pub summary: PathBuf,
    pub final_k: Vec<usize>,
}

/// Runs the configured algorithm once per seed, writing one trace CSV per
/// seed and `summary.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, log: &mut impl Write) -> Result<RunOutput, CliError> {
    std::fs::create_dir_all(out)?;
    let name = algorithm_name(cfg.run.algorithm);
    let mut traces: Vec<Vec<RoundRecord>> = Vec::new();
    let mut seeds = Vec::new();
    let mut csv_files = Vec::new();
    for seed in cfg.seed_list() {
        let rc = cfg.run_config(seed);
        if cfg.run.export_partition {
            let mut buf = Vec::new();
            write_partition(&build_partition(&rc)?, &mut buf)?;
            write_atomic(&out.join(format!("partition_seed{seed}.csv")), &buf)?;
        }
        let exp = run_experiment(&rc)?;
        let file = format!("{name}_seed{seed}.csv");
        write_atomic(&out.join(&file), trace_csv(&exp.trace).as_bytes())?;
        let last = exp.trace.last().expect("rounds >= 1");
        writeln!(log, "seed {seed}: final K={} acc={:.4} -> {}", exp.final_k(), last.acc_mean, out.join(&file).display())?;
        seeds.push(SeedResult { seed, final_k: exp.final_k(), csv: file });
        csv_files.push(out.join(seeds.last().unwrap().csv.clone()));
        traces.push(exp.trace);
    }
    let views: Vec<&[RoundRecord]> = traces.iter().map(Vec::as_slice).collect();
    let summary = RunSummary {
        version: VERSION,
        command: "run",
        config: cfg.clone(),
        tail_rounds: TAIL_ROUNDS,
        final_k: seeds.iter().map(|s| s.final_k).collect(),
        seeds,
        metrics: final_round_stats(&views),
    };
    let path = out.join("summary.json");
    write_json(&path, &summary)?;
    Ok(RunOutput { csv_files, summary: path, final_k: summary.final_k })
}

/// What a `sweep` produced.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub points: Vec<SweepPoint>,
}

/// Runs the k-means baseline for every K in `run.sweep` and every seed,
/// writing one combined CSV keyed by (K, seed, round).
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, log: &mut impl Write) -> Result<SweepOutput, CliError> {
    if cfg.run.sweep.is_empty() {
        return Err(CliError::Config("run.sweep must list at least one cluster count".into()));
    }
    std::fs::create_dir_all(out)?;
    let mut csv = sweep_header();
    csv.push('\n');
    let mut points = Vec::new();
    for &k in &cfg.run.sweep {
        let mut traces = Vec::new();
        for seed in cfg.seed_list() {
            let mut rc = cfg.run_config(seed);
            rc.algorithm = Algorithm::FixedK;
            rc.fixed_k = k;
            let exp = run_experiment(&rc)?;
            for r in &exp.trace {
                csv.push_str(&format!("{k},{seed},{}\n", r.csv_row()));
            }
            traces.push(exp.trace);
        }
        let views: Vec<&[RoundRecord]> = traces.iter().map(Vec::as_slice).collect();
        let metrics = final_round_stats(&views);
        writeln!(log, "K={k}: acc={:.4} (sd {:.4})", metrics["acc_mean"].mean, metrics["acc_mean"].sd)?;
        points.push(SweepPoint { k, metrics });
    }
    let csv_path = out.join("sweep.csv");
    write_atomic(&csv_path, csv.as_bytes())?;
    let summary = SweepSummary {
        version: VERSION,
        command: "sweep",
        config: cfg.clone(),
        tail_rounds: TAIL_ROUNDS,
        csv: "sweep.csv".into(),
        points,
    };
    let path = out.join("sweep_summary.json");
    write_json(&path, &summary)?;
    Ok(SweepOutput { csv: csv_path, summary: path, points: summary.points })
}

/// Runs the self-checks, printing one line per check.
pub fn cmd_validate(level: Level, seed: u64, log: &mut impl Write) -> Result<(), CliError> {
    let checks = run_checks(level, seed)?;
    for c in &checks {
        writeln!(log, "{c}")?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Validation(failed));
    }
    writeln!(log, "all {} checks passed", checks.len())?;
    Ok(())
}
