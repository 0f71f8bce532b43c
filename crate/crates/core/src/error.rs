use std::io;

use thiserror::Error;

/// Errors raised by the simulator, analyses, and file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsorted input: {0}")]
    Unsorted(String),

    #[error("target unreachable: {0}")]
    Unreachable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("curve never crosses the 3 dB point (max measured rate {max_rate:.6e} counts/s)")]
    NoCrossing { max_rate: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration invalid:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Machine-readable category reported by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Unsorted(_) => "unsorted",
            Error::Unreachable(_) => "unreachable",
            Error::InsufficientData(_) => "insufficient_data",
            Error::NoCrossing { .. } => "no_crossing",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit status for the category; 2 is left to usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::InvalidParameter(_) => 4,
            Error::Format(_) => 5,
            Error::Unsorted(_) => 6,
            Error::Io(_) => 7,
            Error::InsufficientData(_) => 8,
            Error::NoCrossing { .. } => 9,
            Error::Unreachable(_) => 10,
            Error::Json(_) => 11,
            Error::Csv(_) => 12,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
