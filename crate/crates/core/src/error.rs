use thiserror::Error;

/// Failures inside the actor-critic engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum A2cError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid action distribution: {0}")]
    InvalidDistribution(String),
    #[error("action index {index} out of range for {size} actions")]
    InvalidAction { index: usize, size: usize },
    #[error("non-finite {0} gradient")]
    NonFinite(&'static str),
}

/// A rejected configuration value. `key` is the dotted config key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config key `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical abort: {0}")]
    Numerical(#[from] A2cError),
    #[error("invariant violated at tti {tti}: {what}")]
    Invariant { tti: u64, what: String },
}
