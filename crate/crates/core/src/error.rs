use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or settings that cannot describe a valid network or run.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called with arguments violating its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite or otherwise malformed input data.
    #[error("input error: {0}")]
    Input(String),

    #[error("training diverged at epoch {epoch}{}: {reason}", sample.map(|s| format!(", sample {s}")).unwrap_or_default())]
    Training {
        epoch: usize,
        sample: Option<usize>,
        reason: String,
    },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
