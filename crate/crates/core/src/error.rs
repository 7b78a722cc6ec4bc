use std::io;

use thiserror::Error;

use crate::datamodel::FeatureKey;

/// Failures while decoding or encoding a feature cache file.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic: expected FSCACHE1")]
    BadMagic,
    #[error("truncated file: {0}")]
    Truncated(&'static str),
    #[error("dimension mismatch: store has d={expected}, record has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid utf-8 in image id")]
    InvalidId,
    #[error("unknown crop tag {0}")]
    UnknownCropTag(u8),
    #[error("image id too long ({0} bytes)")]
    IdTooLong(usize),
    #[error("non-finite value in record for {0}")]
    NonFinite(String),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("trailing bytes after {0} records")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("codec error: {0}")]
    Codec(#[from] CodecError),
    #[error("feature not found: {0}")]
    NotFound(FeatureKey),
    #[error("{} feature(s) missing from store, first: {}", .0.len(), .0.first().map(|k| k.to_string()).unwrap_or_default())]
    MissingFeatures(Vec<FeatureKey>),
    #[error("insufficient images in class {class}: need {needed}, have {available}")]
    InsufficientImages {
        class: String,
        needed: usize,
        available: usize,
    },
    #[error("degenerate covariance: rank {rank} < 2")]
    DegenerateCovariance { rank: usize },
    #[error("empty mask")]
    EmptyMask,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code: 1 validation, 2 missing data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Codec(_)
            | Error::Json(_)
            | Error::InsufficientImages { .. }
            | Error::DegenerateCovariance { .. }
            | Error::EmptyMask => 1,
            Error::NotFound(_) | Error::MissingFeatures(_) | Error::Io(_) => 2,
            Error::Csv(_) | Error::Internal(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
