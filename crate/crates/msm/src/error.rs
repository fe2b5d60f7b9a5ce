//! Error type shared across the crate.

use std::io;
use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by failure class rather than by module so that
/// callers (and the CLI) can report them uniformly.
#[derive(Debug, Error)]
pub enum MsmError {
    /// Invalid configuration: bad field values, divisibility violations,
    /// missing sections. The message names the offending fields.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to a library call (out-of-range index, mismatched
    /// dimensions, non-positive tolerance).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Malformed data in an external file (snapshot, CSV, checkpoint,
    /// manifest, basis cache). Carries a 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Data that parsed but is semantically unusable (duplicate measurement
    /// cells, dimension mismatch against the active grid, non-finite values).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: non-convergence of an iterative solver, loss of
    /// positive definiteness, non-finite intermediate values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Deliberate refusal to allocate: problem size above a configured cap.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl MsmError {
    /// Parse error helper with a 1-based line number.
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        MsmError::Parse { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, MsmError>;
