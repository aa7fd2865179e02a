//! Error type shared across the crate.

use crate::qcqp::QcqpSolution;
use std::io;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (SVMlight text, score files).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid option combination or out-of-range parameter.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Structurally valid input that violates a data contract.
    #[error("invalid data: {0}")]
    Data(String),

    /// Training requires at least one example of each label.
    #[error("degenerate label distribution: {0}")]
    Degenerate(String),

    /// The reduced-dual solver was handed a malformed instance.
    #[error("qcqp solver: {0}")]
    Qcqp(String),

    /// Solver ran out of iterations; carries the best iterate found.
    #[error("qcqp solver did not reach tolerance: residual {residual:.3e}")]
    QcqpNotConverged {
        residual: f64,
        best: Box<QcqpSolution>,
    },

    /// Malformed model or manifest file.
    #[error("model format error at line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
