//! Experiment configuration files.
//!
//! A config is a TOML document with one table per component:
//!
//! ```toml
//! [run]
//! algorithm = "dpmm"   # required: dpmm | fixedk | global
//! rounds = 30          # required
//! seed = 0             # first seed; seeds run seed, seed+1, ...
//! seeds = 5
//! fixed_k = 4
//! sweep = [1, 2, 4, 8, 16]
//!
//! [partition]
//! scheme = "dirichlet" # required: dirichlet | class_split
//! ```
//!
//! All other keys fall back to library defaults. Every error names the
//! offending key and, where it comes from the file, its line.

use std::path::{Path, PathBuf};

use dpmm_cfl::config::{Aggregation, Algorithm, RunConfig};
use dpmm_cfl::dpmm::DpConfig;
use dpmm_cfl::model::SgdConfig;
use dpmm_cfl::partition::{PartitionSpec, PoolSpec};
use dpmm_cfl::sampler::SamplerConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: Algorithm,
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of consecutive seeds to run.
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default = "four")]
    pub fixed_k: usize,
    /// Cluster counts for the `sweep` command.
    #[serde(default)]
    pub sweep: Vec<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Also write each seed's client partition as a flat CSV.
    #[serde(default)]
    pub export_partition: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths; empty means a linear softmax model.
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub sgd: SgdConfig,
    #[serde(default)]
    pub dp: DpConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub pool: PoolSpec,
    pub partition: PartitionSpec,
}

impl ExperimentConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.run.seeds as u64).map(|i| self.run.seed + i).collect()
    }

    /// Library settings for one seed.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            algorithm: self.run.algorithm,
            rounds: self.run.rounds,
            seed,
            fixed_k: self.run.fixed_k,
            aggregation: self.run.aggregation,
            hidden_dims: self.model.hidden_dims.clone(),
            sgd: self.sgd.clone(),
            dp: self.dp.clone(),
            sampler: self.sampler.clone(),
            pool: self.pool.clone(),
            partition: self.partition.clone(),
        }
    }

    /// Checks that go beyond the library's own validation. Messages start
    /// with the dotted key they concern.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.run.seeds == 0 {
            return Err("run.seeds must be >= 1".into());
        }
        for &k in &self.run.sweep {
            if k == 0 || k > self.partition.num_clients {
                return Err(format!("run.sweep entry {k} must lie in [1, partition.num_clients]"));
            }
        }
        self.run_config(self.run.seed).validate().map_err(|e| match e {
            dpmm_cfl::Error::InvalidConfig(msg) => msg,
            other => other.to_string(),
        })
    }
}

/// A parsed `--set key=value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub raw: String,
    pub path: Vec<String>,
    pub value: toml::Value,
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(raw: &str) -> std::result::Result<Self, String> {
        let (key, value) = raw.split_once('=').ok_or_else(|| format!("override `{raw}` is not key=value"))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(format!("override `{raw}` has an empty key segment"));
        }
        // Accept any TOML value; anything that does not parse is a bare string.
        let value = toml::from_str::<toml::Table>(&format!("v = {}", value.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
        Ok(Self { raw: raw.to_string(), path, value })
    }
}

impl Override {
    pub fn new(key: &str, value: toml::Value) -> Self {
        Self { raw: format!("{key}={value}"), path: key.split('.').map(str::to_string).collect(), value }
    }

    fn key(&self) -> String {
        self.path.join(".")
    }

    fn apply(&self, table: &mut toml::Table) -> std::result::Result<(), String> {
        let (last, parents) = self.path.split_last().expect("nonempty path");
        let mut cur = table;
        for seg in parents {
            cur = cur
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| format!("`{seg}` is not a table"))?;
        }
        cur.insert(last.clone(), self.value.clone());
        Ok(())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn header_name(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix('[').and_then(|r| r.strip_suffix(']')).map(str::trim)
}

/// Line (1-based) of `section.key` in the document, of the `[section]`
/// header if the key is absent, or `None` if neither appears.
pub fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.').unwrap_or(("", dotted));
    let mut current = "";
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(name) = header_name(line) {
            current = name;
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        let lhs = line.split('=').next().unwrap_or("").trim();
        if current == section && line.contains('=') && lhs == key {
            return Some(i + 1);
        }
    }
    header
}

/// The section whose body contains `line`, if any.
fn section_at(text: &str, line: usize) -> Option<String> {
    text.lines().take(line).filter_map(header_name).last().map(str::to_string)
}

/// First backtick-quoted word in a serde message.
fn quoted(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

/// Loads and validates a config file, applying overrides in order.
pub fn load(path: &Path, overrides: &[Override]) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
    parse(&text, &path.display().to_string(), overrides)
}

/// Parses config text; `origin` labels error messages.
pub fn parse(text: &str, origin: &str, overrides: &[Override]) -> Result<ExperimentConfig, CliError> {
    let anchored = |line: usize, msg: String| CliError::Config(format!("{origin}:{line}: {msg}"));

    let mut table: toml::Table = toml::from_str(text).map_err(|e: toml::de::Error| {
        let line = e.span().map_or(1, |s| line_of_offset(text, s.start));
        anchored(line, e.message().to_string())
    })?;

    let cfg: ExperimentConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e: toml::de::Error| {
            let line = e.span().map_or(1, |s| line_of_offset(text, s.start));
            let msg = e.message();
            match (msg.strip_prefix("missing field "), quoted(msg)) {
                (Some(_), Some(field)) => {
                    let key = match section_at(text, line) {
                        Some(section) => format!("{section}.{field}"),
                        None => field.to_string(),
                    };
                    anchored(line, format!("missing required key `{key}`"))
                }
                _ => anchored(line, msg.to_string()),
            }
        })?
    } else {
        for o in overrides {
            o.apply(&mut table).map_err(|m| CliError::Config(format!("--set {}: {m}", o.raw)))?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message();
            let key = quoted(msg).unwrap_or("");
            match overrides.iter().rev().find(|o| o.path.last().map(String::as_str) == Some(key)) {
                Some(o) => CliError::Config(format!("--set {}: {msg}", o.raw)),
                None => CliError::Config(format!("{origin}: {msg} (after --set overrides)")),
            }
        })?
    };

    cfg.validate().map_err(|msg| {
        let key = msg.split_whitespace().next().unwrap_or("").to_string();
        if let Some(o) = overrides.iter().rev().find(|o| o.key() == key) {
            return CliError::Config(format!("--set {}: {msg}", o.raw));
        }
        anchored(locate_key(text, &key).unwrap_or(1), msg)
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[run]\nalgorithm = \"dpmm\"\nrounds = 3\n\n[partition]\nscheme = \"dirichlet\"\n";

    fn err(text: &str, overrides: &[Override]) -> String {
        match parse(text, "cfg.toml", overrides) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse(MINIMAL, "cfg.toml", &[]).unwrap();
        assert_eq!(cfg.run.rounds, 3);
        assert_eq!(cfg.run.seeds, 1);
        assert_eq!(cfg.dp, DpConfig::default());
        assert_eq!(cfg.seed_list(), vec![0]);
    }

    #[test]
    fn missing_key_is_named_with_line() {
        let m = err("[run]\nalgorithm = \"dpmm\"\n\n[partition]\nscheme = \"dirichlet\"\n", &[]);
        assert!(m.contains("run.rounds"), "{m}");
        assert!(m.starts_with("cfg.toml:1:"), "{m}");
        let m = err("[run]\nalgorithm = \"dpmm\"\nrounds = 2\n\n[partition]\nnum_clients = 8\n", &[]);
        assert!(m.contains("partition.scheme"), "{m}");
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let m = err(&MINIMAL.replace("rounds = 3", "rounds = 0"), &[]);
        assert_eq!(m, "cfg.toml:3: run.rounds must be >= 1");
        let text = format!("{MINIMAL}\n[dp]\nalpha = -1.0\n");
        assert_eq!(err(&text, &[]), "cfg.toml:9: dp.alpha must be positive");
        // Linear model on 2 features and 10 classes: 20 weights + 10 biases.
        let text = format!("{MINIMAL}\n[dp]\nmu0 = [0.0, 1.0]\n");
        assert_eq!(
            err(&text, &[]),
            "cfg.toml:9: dp.mu0 must be empty or have 30 entries (the representation dimension), got 2"
        );
        let text = format!("{MINIMAL}\n[dp]\nmu0 = [{}]\n", vec!["0.5"; 30].join(", "));
        assert_eq!(parse(&text, "cfg.toml", &[]).unwrap().dp.mu0.len(), 30);
    }

    #[test]
    fn unknown_keys_rejected() {
        let m = err(&format!("{MINIMAL}\n[sgd]\nlearning_rat = 0.1\n"), &[]);
        assert!(m.starts_with("cfg.toml:9:") && m.contains("learning_rat"), "{m}");
    }

    #[test]
    fn overrides_apply_and_are_blamed() {
        let o: Override = "sgd.learning_rate=0.05".parse().unwrap();
        let cfg = parse(MINIMAL, "cfg.toml", &[o]).unwrap();
        assert_eq!(cfg.sgd.learning_rate, 0.05);
        let o: Override = "run.algorithm=global".parse().unwrap();
        assert_eq!(parse(MINIMAL, "cfg.toml", &[o]).unwrap().run.algorithm, Algorithm::Global);
        let o: Override = "run.rounds=0".parse().unwrap();
        assert_eq!(err(MINIMAL, &[o]), "--set run.rounds=0: run.rounds must be >= 1");
        assert!("novalue".parse::<Override>().is_err());
    }

    #[test]
    fn sweep_entries_checked() {
        let text = MINIMAL.replace("rounds = 3", "rounds = 3\nsweep = [1, 999]");
        assert!(err(&text, &[]).starts_with("cfg.toml:4: run.sweep"));
    }
}
