use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error in {path} at byte offset {offset}: {reason}")]
    Ingestion {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at iteration {iteration}: non-finite {what}")]
    Diverged { iteration: u64, what: &'static str },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
