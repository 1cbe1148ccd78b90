//! Discrete-event O-RAN simulator with two nested advantage actor-critic
//! agents: a per-RBG downlink scheduler and a DU/CU placement agent that
//! decides where the scheduler runs.

pub mod a2c;
pub mod config;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod placement;
pub mod ran;
pub mod scheduler;
pub mod sim;
pub mod traffic;

pub use error::{A2cError, ConfigError, SimError};
