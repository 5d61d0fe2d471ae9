use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the decoding stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the CLI: 1 config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Json(_) | Error::Unsupported(_) => 1,
            Error::NotFound(_)
            | Error::CorruptData(_)
            | Error::InvalidManifest(_)
            | Error::OutOfBounds(_)
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::NumericalFailure(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
