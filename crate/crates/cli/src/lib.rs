//! Config-driven runner for the `roughctl` experiments.
//!
//! A run is one TOML file ([`RunConfig`]) plus an output directory. Results
//! are CSV artifacts, `summary.json` (checks and metrics) and
//! `manifest.json` (config echo, seeds, version, SHA-256 of every file).

pub mod config;
pub mod run;

pub use config::{RunConfig, Subcommand};
pub use run::{execute, run, write_outputs, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] roughctl_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Core(_) => "numerics",
            Self::Io(_) => "io",
        }
    }
}
