//! Experiment runner for the temporal knockout benchmark: configuration,
//! resumable stages and report generation.

pub mod config;
pub mod manifest;
pub mod pipeline;

use thiserror::Error;
use tkobench_core::centrality::CentralityError;
use tkobench_core::epidemic::SimError;
use tkobench_core::graphgen::GraphError;

pub use config::{Config, Preset};
pub use pipeline::{run, RunStats, Stage};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resume conflict: {0}")]
    ResumeConflict(String),
    #[error("artifact corrupt: {0}")]
    ArtifactCorrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Centrality(#[from] CentralityError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ResumeConflict(_) => 2,
            CliError::ArtifactCorrupt(_) => 3,
            _ => 1,
        }
    }
}
