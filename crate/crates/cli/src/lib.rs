//! Scenario registry, configuration and runner behind the `gfc` binary.

pub mod config;
pub mod error;
pub mod registry;
pub mod runner;

pub use config::ScenarioConfig;
pub use error::CliError;
pub use runner::{execute, run_scenario, Report, RunOptions, RunOutcome};
