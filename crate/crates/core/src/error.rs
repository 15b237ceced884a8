use thiserror::Error;

#[derive(Debug, Error)]
pub enum StokesError {
    #[error("invalid problem size n = {0}: need n >= 2")]
    InvalidSize(usize),

    #[error("invalid tolerance {0}: must be positive and finite")]
    InvalidTolerance(f64),

    #[error("n = {n} exceeds the dense-oracle cap of {cap} (set STOKES_DENSE_CAP to override)")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("structured kernel is not positive definite: {0}")]
    Structural(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("perturbation mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("iteration diverged: non-finite value at iteration {0}")]
    Divergence(usize),

    #[error("invalid entry ({row}, {col}) for a {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StokesError>;
