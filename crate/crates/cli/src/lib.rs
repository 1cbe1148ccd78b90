//! Batch front-end for the simulator: config resolution, metric artifacts,
//! and comparison of aggregate files.

pub mod artifacts;
pub mod compare;
pub mod config;

use dscd_core::{ConfigError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for numerical aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Sim(SimError::Config(_)) => 2,
            CliError::Sim(SimError::Numerical(_)) => 3,
            CliError::Sim(SimError::Invariant { .. }) | CliError::Io { .. } | CliError::Input(_) => 1,
        }
    }
}
