use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the gca library.
#[derive(Debug, Error)]
pub enum GcaError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} line {line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("inconsistent {what}: declared {declared}, found {found}")]
    CountMismatch {
        what: &'static str,
        declared: usize,
        found: usize,
    },

    #[error("{what} index {index} out of range (limit {limit}) at line {line}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
        line: usize,
    },

    #[error("non-finite feature value at node {node}, dimension {dim}")]
    NonFiniteFeature { node: usize, dim: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite output in {0}")]
    NonFinite(String),

    #[error("row {row} of {which} has zero norm")]
    ZeroNormRow { which: &'static str, row: usize },

    #[error("row {row} of {which} is not unit-normalized (norm {norm})")]
    NotNormalized {
        which: &'static str,
        row: usize,
        norm: f64,
    },

    #[error("training diverged at epoch {epoch}: objective {value}")]
    Diverged { epoch: usize, value: f64 },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, GcaError>;
