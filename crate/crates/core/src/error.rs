use thiserror::Error;

/// Errors produced by mesh construction, assembly, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside supported domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assembly failed on element {element}: {reason}")]
    Assembly { element: usize, reason: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver refused: {n_dofs} degrees of freedom exceed the dense cap {cap}; use the time-stepped path")]
    EigenCapExceeded { n_dofs: usize, cap: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
