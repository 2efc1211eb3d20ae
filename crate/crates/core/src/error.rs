use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("zero-dimensional input rejected")]
    ZeroDimension,

    #[error("symmetric eigen-decomposition failed")]
    EigenFailure,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system in {0}")]
    SingularSystem(&'static str),

    #[error("could not bracket the scalar root after {0} doublings")]
    BracketFailure(usize),

    #[error("degenerate triangle: denominator {0:e}")]
    DegenerateTriangle(f64),

    #[error("iterate norm {norm:e} exceeded the divergence guard at iteration {k}")]
    Divergence { k: usize, norm: f64 },

    #[error("unknown instance kind `{0}`")]
    UnknownKind(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
