use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported instance file version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed partition: {0}")]
    Partition(String),

    #[error("solver iteration limit exceeded in {0}")]
    IterationLimit(&'static str),

    #[error("numerical failure in {0}")]
    Numerical(String),

    #[error("branch-and-bound incomplete: node budget of {budget} exhausted")]
    Incomplete { budget: usize },

    #[error("enumeration bound exceeded: {count} integer assignments (limit {limit})")]
    EnumerationBound { count: f64, limit: f64 },

    #[error("GNN variant mismatch: model expects {expected}, graph is {found}")]
    VariantMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("{0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
