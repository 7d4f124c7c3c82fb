use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: missing column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot read `{value}` as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("degenerate scale: column `{column}` is constant")]
    DegenerateScale { column: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate universe [{min}, {max}]: max must exceed min")]
    DegenerateUniverse { min: f64, max: f64 },

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("rule base construction error: {0}")]
    Construction(String),

    #[error("every rule fell below the pruning threshold {threshold}")]
    EmptyRuleBase { threshold: f64 },

    #[error("design matrix is rank deficient (rank {rank} < {cols}); use lambda > 0")]
    RankDeficient { rank: usize, cols: usize },

    #[error("consequent layout error: expected {expected} parameters, got {actual}")]
    Layout { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
