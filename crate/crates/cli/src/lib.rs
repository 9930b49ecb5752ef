//! Command-line pipeline: configuration, stage orchestration and the
//! synthetic fixture generator.

pub mod config;
pub mod error;
pub mod fixture;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
