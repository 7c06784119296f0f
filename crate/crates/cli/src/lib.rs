//! Pipeline orchestration behind the `gridsentry` binary.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use cli::Cli;
pub use error::CliError;
