use thiserror::Error;

/// Errors produced by the design and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not Hermitian positive semidefinite: {0}")]
    NotPsd(String),
    #[error("matrix is not Hermitian positive definite: {0}")]
    NotPd(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate weight matrix: {0}")]
    DegenerateWeight(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
