//! The `povmap` command-line pipeline: direct estimation, model fitting, comparison,
//! reporting and simulation.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;

pub use error::CliError;
