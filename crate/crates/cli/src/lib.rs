//! Scenario files, the run pipeline and its outputs, used by the `qorbit`
//! binary.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod sweep;

pub use config::Scenario;
pub use error::CliError;
