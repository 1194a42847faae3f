use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: shape mismatch, expected {expected}, found {found}")]
    Shape {
        field: String,
        expected: String,
        found: String,
    },

    #[error("adjacency is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    #[error("adjacency has non-binary entry {value} at ({row}, {col})")]
    NonBinary { row: usize, col: usize, value: f64 },

    #[error("adjacency has nonzero diagonal entry at ({index}, {index})")]
    NonZeroDiagonal { index: usize },

    #[error("{field} has a non-finite value at ({row}, {col})")]
    NonFinite {
        field: String,
        row: usize,
        col: usize,
    },

    #[error("label {0} is out of range for a binary task")]
    Label(usize),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("failed to parse {}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },

    #[error("subjects `{first}` {first_dims:?} and `{second}` {second_dims:?} have inconsistent (N, d, c)")]
    InconsistentDims {
        first: String,
        first_dims: (usize, usize, usize),
        second: String,
        second_dims: (usize, usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged in stage {stage} at epoch {epoch}, step {step}: {what}")]
    Diverged {
        stage: u8,
        epoch: usize,
        step: usize,
        what: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
