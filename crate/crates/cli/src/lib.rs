//! Command-line front end for the topic-guided language model benchmark: configuration,
//! preprocessing, training, evaluation and report tables.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod prep;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use models::ModelSpec;
pub use prep::Prepared;
