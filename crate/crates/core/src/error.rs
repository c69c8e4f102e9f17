use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("map is not completely positive: Choi eigenvalue {0:e} below tolerance")]
    NotCompletelyPositive(f64),

    #[error("environment dimension {d_z} is smaller than the state rank {rank}")]
    InsufficientEnvironment { d_z: usize, rank: usize },

    #[error("invalid isometry: {0}")]
    Isometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate fit: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
