//! IO, configuration, checkpoints, experiments and the command-line
//! interface around `ccnets-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod experiments;
pub mod output;
pub mod prepare;

pub use error::{CliError, Result};
