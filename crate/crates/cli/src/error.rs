use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;
use xlb_core::align::AlignError;
use xlb_core::corpus::CorpusError;
use xlb_core::embedding::EmbeddingError;
use xlb_core::metrics::MetricsError;
use xlb_core::retrieval::RetrievalError;
use xlb_core::scenario::ScenarioError;
use xlb_core::synth::SynthError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadReport { path: PathBuf, message: String },
    #[error("gradient check failed: max relative error {max_rel_error:e} >= {tolerance:e}")]
    GradCheckFailed { max_rel_error: f64, tolerance: f64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// What `main` prints to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Io { .. } => "IoError",
            CliError::BadReport { .. } => "ReportError",
            CliError::GradCheckFailed { .. } => "GradCheckFailed",
            CliError::Corpus(_) => "CorpusError",
            CliError::Synth(_) => "SynthError",
            CliError::Embedding(_) => "EmbeddingError",
            CliError::Scenario(_) => "ScenarioError",
            CliError::Retrieval(_) => "RetrievalError",
            CliError::Metrics(_) => "MetricsError",
            CliError::Align(_) => "AlignError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::GradCheckFailed { .. } => 3,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}
