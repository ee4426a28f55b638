//! Configuration, seeded replica orchestration and persistence for dbmlab
//! experiments.

pub mod config;
pub mod run;

pub use config::{io_roundtrip, ExperimentConfig, Kind, Violation};
pub use run::{aggregate, run_experiment, RunOptions, RunRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required fields: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("invalid config:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Lab(String),
    #[error("aggregation: {0}")]
    Aggregate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<dbmlab::FcError> for CliError {
    fn from(e: dbmlab::FcError) -> Self {
        CliError::Lab(e.to_string())
    }
}
