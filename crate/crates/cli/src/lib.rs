//! Experiment driver: loads a corpus from a JSON config and runs the ranking,
//! training, unlearning, audit and accuracy studies, writing CSV and JSON
//! artifacts.

use maxrr::audit::AuditError;
use maxrr::data::DataError;
use maxrr::pipeline::PipelineError;
use maxrr::ranking::RankingError;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod corpus;
pub mod experiments;

pub use config::{CorpusSpec, ExperimentConfig};
pub use corpus::Corpus;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}
