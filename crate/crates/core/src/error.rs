use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    /// A grid file is malformed. `field` names the offending header or payload item.
    #[error("format error in {field}: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("size error: {0}")]
    Size(String),

    /// Two volumes that must share a grid layout do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("placement failed after {attempts} attempts ({placed} of {requested} objects placed)")]
    PlacementFailure {
        attempts: usize,
        placed: usize,
        requested: usize,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }
}
