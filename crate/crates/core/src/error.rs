use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("range {start}..{end} exceeds series length {len}")]
    OutOfRange { start: usize, end: usize, len: usize },

    #[error("degenerate pair ({0}, {1}): zero fluctuation at this scale")]
    DegeneratePair(String, String),

    #[error("degenerate assets (zero variance at scale {scale}): {}", .assets.join(", "))]
    DegenerateAssets { scale: usize, assets: Vec<String> },

    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    #[error("internal numeric defect: {0}")]
    Defect(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 usage/config, 3 data, 4 numeric degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::DegeneratePair(..)
            | Error::DegenerateAssets { .. }
            | Error::Degenerate(_)
            | Error::Defect(_) => 4,
            _ => 3,
        }
    }
}
