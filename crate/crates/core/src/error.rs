use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid zone configuration: {0}")]
    InvalidZone(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid distance {0} m (must be > 0)")]
    InvalidDistance(f64),

    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("path-loss design matrix is singular: {0}")]
    SingularDesign(String),

    #[error("cross-correlation estimation needs at least 2 transmitters, got {0}")]
    InsufficientSources(usize),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("semivariogram is identically zero")]
    DegenerateVariogram,

    #[error("kriging system is singular")]
    SingularSystem,

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config { line: usize, key: String, message: String },

    #[error("malformed input {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
