use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(
        "circulant embedding failed: min eigenvalue {min_eigenvalue:e} vs max {max_eigenvalue:e} \
         at embedding {size_x}x{size_y}"
    )]
    EmbeddingFailed {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        size_x: usize,
        size_y: usize,
    },

    #[error("linear solver did not converge: relative residuals {history:?}")]
    SolverDivergence { history: Vec<f64> },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("dataset format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checksum mismatch in {path}: expected {expected}, found {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
