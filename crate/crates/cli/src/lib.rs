//! Command-line analysis of randomized experiments that compare human,
//! AI-assisted and AI-alone decisions: configuration, CSV input, JSON
//! reports and the subcommand orchestration.

pub mod config;
pub mod csvio;
pub mod error;
pub mod oracle_check;
pub mod render;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use report::Report;
pub use run::{run, Command};
