use std::io;

use thiserror::Error;

/// Errors produced anywhere in the translation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {slot}: {message}")]
    Parse { slot: String, message: String },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("training diverged at epoch {epoch}, update {update}: {detail}")]
    TrainingDiverged {
        epoch: usize,
        update: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn file_error(path: &std::path::Path, source: io::Error) -> Error {
    Error::File {
        path: path.display().to_string(),
        source,
    }
}
