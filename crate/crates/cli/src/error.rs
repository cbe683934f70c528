use std::path::{Path, PathBuf};

use thiserror::Error;
use wirebeam_core::error::{CheckpointError, TrainError};

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(serde_json::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} sweep cells failed")]
    PartialFailure { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn checkpoint(path: &Path, source: CheckpointError) -> Self {
        Self::Checkpoint {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for a sweep that finished with failed cells,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::PartialFailure { .. } => 2,
            _ => 1,
        }
    }
}
