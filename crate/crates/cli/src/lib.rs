//! Experiment harness for the multilevel ensemble transform particle filter.
//!
//! Each experiment is a TOML file ([`config::ExperimentConfig`]); the
//! functions in [`experiments`] turn one into CSV tables and JSON run
//! summaries.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    Parse(String),

    #[error("invalid config:\n{}", list(.0))]
    Config(Vec<config::FieldError>),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Run(#[from] mletpf::Error),
}

fn list(errs: &[config::FieldError]) -> String {
    errs.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// Process exit status: 2 for bad input, 3 when a run breaks down.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Config(_) => 2,
            CliError::Run(mletpf::Error::Degeneracy { .. } | mletpf::Error::Divergence { .. }) => 3,
            CliError::Run(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
