use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("{path}: {}", format_row_errors(.errors))]
    Ingest { path: PathBuf, errors: Vec<RowError> },

    #[error("numeric underflow: {0}")]
    Underflow(String),

    #[error("quadrature did not converge: estimate {estimate:.3e}, error bound {error_bound:.3e} after {intervals} subintervals")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        intervals: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite log target at iteration {iteration}: {detail}")]
    NonFiniteTarget { iteration: u64, detail: String },

    #[error("initialization failed: {0}")]
    Init(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A located problem in a tabular input file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number including the header line, when the problem has one.
    pub line: Option<u64>,
    pub message: String,
}

fn format_row_errors(errors: &[RowError]) -> String {
    errors
        .iter()
        .map(|e| match e.line {
            Some(line) => format!("line {line}: {}", e.message),
            None => e.message.clone(),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
