use std::io;
use std::path::PathBuf;

use ddfuse_core::error::{EvidenceError, MatchError, MetricsError, PipelineError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Pairing(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Parse(_) => 2,
            CliError::Pairing(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::MissingPair(_) | PipelineError::DuplicateScene(_) => {
                CliError::Pairing(e.to_string())
            }
            PipelineError::Config(_) | PipelineError::Geometry(_) | PipelineError::Match(_) => {
                CliError::Parse(e.to_string())
            }
            PipelineError::Evidence(e) => e.into(),
        }
    }
}

impl From<EvidenceError> for CliError {
    fn from(e: EvidenceError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Placement { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}
