//! Library surface of the command-line toolkit: configuration, pipelines,
//! artifact emission. The binary in `main.rs` is a thin argument-parsing
//! wrapper so integration tests can drive pipelines directly.

pub mod config;
pub mod errors;
pub mod pipeline;
pub mod report;

pub use config::ExperimentConfig;
pub use errors::CliError;
pub use pipeline::{run_pipeline, Command};
