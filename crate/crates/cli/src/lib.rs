//! Config-driven experiment runner for the pingpong models.

pub mod config;
pub mod error;
pub mod runner;

pub use config::Config;
pub use error::{CliError, Result};
pub use runner::{list_profiles, run, Command, ExperimentOutcome, RunManifest, RunOptions};
