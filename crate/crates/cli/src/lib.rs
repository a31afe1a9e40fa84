//! Config-driven runner around `xlb_core`: synthetic data generation,
//! scenario evaluation, adapter training, loss ablations, report comparison
//! and gradient checks.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::*;
pub use config::RunConfig;
pub use error::CliError;
