//! Batch experiment runner for the DPMM-CFL simulator.
//!
//! The `dpmm-cfl` binary is a thin wrapper over [`commands`]; the pieces
//! are exposed as a library so tests can drive them directly.

pub mod commands;
pub mod config;
pub mod output;

/// Version string embedded at build time (`git describe` style).
pub const VERSION: &str = env!("DPMM_CFL_VERSION");

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DPMM_CFL_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration is malformed or fails validation.
    #[error("{0}")]
    Config(String),
    /// The experiment or its output failed.
    #[error("{0}")]
    Runtime(String),
    /// One or more self-checks failed.
    #[error("{0} validation check(s) failed")]
    Validation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl From<dpmm_cfl::Error> for CliError {
    fn from(e: dpmm_cfl::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
