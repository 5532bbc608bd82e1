use thiserror::Error;

/// Errors raised by the forecaster, environments, oracles and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("at least one expert is required")]
    NoExperts,

    #[error("invalid learning rate {eta} for strategy {strategy}")]
    InvalidEta { eta: f64, strategy: &'static str },

    #[error("advice has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("every surviving expert erred; hard elimination requires a perfect expert")]
    AllExpertsEliminated,

    #[error("environment has no perfect expert")]
    NoPerfectExpert,

    #[error("size limits exceeded: {0}")]
    BoundsExceeded(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
