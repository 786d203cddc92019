//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mode cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),
    #[error("degree constraint violated: {0}")]
    Degree(String),
    #[error("index out of range: {0}")]
    IndexRange(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
