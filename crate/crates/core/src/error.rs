//! Shared error type for the whole pipeline.

use thiserror::Error;

/// Errors produced by signal ingestion, DSP, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad band edges, unknown config key, missing model, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (files, CSV rows, sample rates).
    #[error("data error: {0}")]
    Data(String),

    /// A tensor/matrix had an unexpected shape.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input shorter than one analysis window, or an empty collection.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Two streams do not share a common time interval.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// No usable spectral peak / too few beats to estimate a rate.
    #[error("estimation failure: {0}")]
    EstimationFailed(String),

    /// Non-finite loss or activations during training.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    /// Corrupt, truncated or incompatible serialized artifact.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    ///
    /// 2 = configuration error, 3 = data error, 4 = numeric divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Shape(_) => 2,
            Error::Divergence(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
