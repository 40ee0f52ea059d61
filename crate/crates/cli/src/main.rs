use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpmm_cfl::config::Algorithm;
use dpmm_cfl::validation::Level;
use dpmm_cfl_cli::commands::{cmd_run, cmd_sweep, cmd_validate, resolve_out_dir};
use dpmm_cfl_cli::config::{load, ExperimentConfig, Override};
use dpmm_cfl_cli::{CliError, VERSION};

/// Clustered federated learning with Dirichlet-process client clustering.
///
/// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
/// 3 failed validation.
#[derive(Parser)]
#[command(name = "dpmm-cfl", version = VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm for every seed.
    Run(ExperimentArgs),
    /// Run the fixed-K baseline for every K in `run.sweep` and every seed.
    Sweep(ExperimentArgs),
    /// Check the Bayesian components against independent oracles.
    Validate {
        /// `fast` (seconds) or `full`.
        #[arg(default_value = "fast")]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// First seed (overrides `run.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: run.out_dir, then $DPMM_CFL_OUT_DIR, then ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.algorithm`.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Overrides `run.fixed_k`.
    #[arg(long)]
    k: Option<usize>,
    /// Override any config key, e.g. `--set sgd.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<Override>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(Override::new("run.seed", toml::Value::Integer(seed as i64)));
        }
        if let Some(a) = self.algorithm {
            let name = match a {
                Algorithm::Dpmm => "dpmm",
                Algorithm::FixedK => "fixedk",
                Algorithm::Global => "global",
            };
            overrides.push(Override::new("run.algorithm", toml::Value::String(name.into())));
        }
        if let Some(k) = self.k {
            overrides.push(Override::new("run.fixed_k", toml::Value::Integer(k as i64)));
        }
        load(&self.config, &overrides)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            cmd_run(&cfg, &resolve_out_dir(args.out.clone(), &cfg), &mut stdout).map(|_| ())
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            cmd_sweep(&cfg, &resolve_out_dir(args.out.clone(), &cfg), &mut stdout).map(|_| ())
        }
        Command::Validate { level, seed } => cmd_validate(level, seed, &mut stdout),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
