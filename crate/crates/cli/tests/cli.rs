//! Behaviour of the `dpmm-cfl` binary: files written, exit codes, messages.

use std::path::Path;
use std::process::{Command, Output};

use dpmm_cfl::partition::read_partition;

const TINY: &str = r#"
[run]
algorithm = "dpmm"
rounds = 1
seeds = 1

[pool]
samples_per_class = 20

[partition]
scheme = "dirichlet"
num_clusters = 2
num_clients = 4
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dpmm-cfl"));
    c.env_remove("DPMM_CFL_OUT_DIR");
    c
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_header_plus_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = run(bin().args(["run", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("dpmm_seed0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "round,K_t,acc_mean,acc_sd,f1_mean,f1_sd,ari,nmi,logpost,objective,accept_split,accept_merge");
    assert_eq!(lines[1].split(',').count(), 12);
}

#[test]
fn summary_records_version_config_and_every_final_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("rounds = 1\nseeds = 1", "rounds = 4\nseeds = 3"));
    let out = dir.path().join("out");
    let o = run(bin().args(["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(s["version"].as_str().unwrap().starts_with('v'));
    assert_eq!(s["config"]["run"]["seed"], 7);
    assert_eq!(s["config"]["partition"]["num_clients"], 4);
    assert_eq!(s["final_k"].as_array().unwrap().len(), 3);
    assert_eq!(s["tail_rounds"], 3);
    for key in ["acc_mean", "f1_mean", "ari", "nmi", "K_t"] {
        assert!(s["metrics"][key]["mean"].is_number(), "{key}");
        assert!(s["metrics"][key]["sd"].as_f64().unwrap() >= 0.0, "{key}");
    }
    for seed in 7..10 {
        assert!(out.join(format!("dpmm_seed{seed}.csv")).exists());
    }
}

#[test]
fn sweep_rows_are_keyed_by_k_seed_round() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("rounds = 1\nseeds = 1", "rounds = 5\nseeds = 2\nsweep = [1, 2, 4]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(bin().args(["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 3 * 2 * 5);
    assert!(lines[0].starts_with("K,seed,round,K_t,"));
    assert!(lines[1].starts_with("1,0,1,1,"));
    assert!(lines.last().unwrap().starts_with("4,1,5,4,"));
    assert!(out.join("sweep_summary.json").exists());
}

#[test]
fn sweep_of_one_matches_global() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("rounds = 1\nseeds = 1", "rounds = 3\nseeds = 1\nsweep = [1]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = run(bin().args(["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]));
    assert!(o.status.success());
    let o = run(bin().args(["run", "--config", &cfg, "--algorithm", "global", "--out", out.to_str().unwrap()]));
    assert!(o.status.success());
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let global = std::fs::read_to_string(out.join("global_seed0.csv")).unwrap();
    let stripped: Vec<&str> = sweep.lines().skip(1).map(|l| l.splitn(3, ',').nth(2).unwrap()).collect();
    assert_eq!(stripped, global.lines().skip(1).collect::<Vec<_>>());
}

#[test]
fn missing_required_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("rounds = 1\n", ""));
    let o = run(bin().args(["run", "--config", &cfg]));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("run.rounds"), "{err}");
    assert!(err.contains("cfg.toml:2:"), "{err}");
}

#[test]
fn invalid_values_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{TINY}\n[sgd]\nbatch_size = 0\n"));
    let o = run(bin().args(["run", "--config", &cfg]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:16: sgd.batch_size must be >= 1"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), TINY);
    let o = run(bin().args(["run", "--config", &cfg, "--set", "dp.alpha=0"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--set dp.alpha=0: dp.alpha must be positive"), "{}", stderr(&o));

    let o = run(bin().args(["run", "--config", &cfg, "--algorithm", "fixedk", "--k", "9"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.fixed_k"), "{}", stderr(&o));

    let o = run(bin().args(["sweep", "--config", &cfg]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.sweep"));

    let o = run(bin().args(["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uncoverable_class_split_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    // Two clusters of two classes each cannot cover ten classes.
    let text = TINY.replace("scheme = \"dirichlet\"", "scheme = \"class_split\"\nclasses_per_cluster = 2\nclasses_per_client = 1");
    let cfg = write_config(dir.path(), &text);
    let o = run(bin().args(["run", "--config", &cfg]));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("cfg.toml:12: partition.classes_per_cluster"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = run(bin().args(["run", "--config", &cfg, "--out", blocker.join("out").to_str().unwrap()]));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let env_out = dir.path().join("from-env");
    let o = run(bin().args(["run", "--config", &cfg]).env("DPMM_CFL_OUT_DIR", &env_out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_out.join("summary.json").exists());

    let flag_out = dir.path().join("from-flag");
    let o = run(bin().args(["run", "--config", &cfg, "--out", flag_out.to_str().unwrap()]).env("DPMM_CFL_OUT_DIR", &env_out));
    assert!(o.status.success());
    assert!(flag_out.join("summary.json").exists());
}

#[test]
fn exported_partition_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = run(bin().args(["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--set", "run.export_partition=true"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let file = std::fs::File::open(out.join("partition_seed0.csv")).unwrap();
    let part = read_partition(std::io::BufReader::new(file)).unwrap();
    assert_eq!(part.clients.len(), 4);
    assert_eq!(part.total_samples(), 200);
}

#[test]
fn validate_fast_passes() {
    let o = run(bin().args(["validate", "fast"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 6, "{text}");
    assert!(text.contains("crp normalisation"));

    let o = run(bin().args(["validate", "medium"]));
    assert_eq!(o.status.code(), Some(2));
}
