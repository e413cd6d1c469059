use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("base station count {0} does not fill complete hexagonal rings (expected 1, 7, 19, 37, ...)")]
    UnsupportedBsCount(usize),

    #[error("distance must be positive and finite, got {0} km")]
    InvalidDistance(f64),

    #[error("cache capacity exceeded: {needed} files required but only {available} exist")]
    CacheCapacity { needed: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing sweep cell: mode {mode}, S = {cache_size}")]
    MissingCell { mode: String, cache_size: usize },

    #[error("unsupported problem shape: {0}")]
    UnsupportedShape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
