//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants map onto the failure classes of the individual subsystems:
/// media decoding, configuration/dimension checks, numeric breakdowns,
/// on-disk format violations, and data/pairing problems in pipelines.
#[derive(Debug, Error)]
pub enum Error {
    /// A media file could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),

    /// An input was empty where content is required.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A configured dimension or parameter is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An index or window fell outside the valid range.
    #[error("index error: {0}")]
    Index(String),

    /// A numeric computation broke down (NaN/Inf, failed factorization).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized artifact violates its documented layout.
    #[error("format error: {0}")]
    Format(String),

    /// Paired inputs do not line up.
    #[error("pairing error: {0}")]
    Pairing(String),

    /// A record or sequence is missing required data.
    #[error("data error: {0}")]
    Data(String),

    /// A pipeline stage adapter failed.
    #[error("stage error in {stage}: {message}")]
    Stage { stage: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
