use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    /// A pipeline stage failed inside the numerical core.
    #[error("{stage} failed: {error}")]
    Stage {
        stage: &'static str,
        error: msmpc_core::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl ToString) -> Self {
        HarnessError::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub fn stage(stage: &'static str, error: msmpc_core::Error) -> Self {
        HarnessError::Stage { stage, error }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
