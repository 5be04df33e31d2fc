//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient geometry: {0}")]
    InsufficientGeometry(String),

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Stable machine-parsable code, also used as the process exit code by the CLI.
    pub fn code(&self) -> (&'static str, i32) {
        match self {
            Error::InvalidArgument(_) => ("invalid-argument", 3),
            Error::DegenerateInput(_) => ("degenerate-input", 4),
            Error::InsufficientGeometry(_) => ("insufficient-geometry", 5),
            Error::Misaligned(_) => ("misaligned-series", 6),
            Error::Config(_) => ("config-error", 7),
            Error::MissingArtifact(_) => ("missing-artifact", 8),
            Error::Io(_) => ("io-error", 9),
            Error::Wav(_) => ("wav-error", 10),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
