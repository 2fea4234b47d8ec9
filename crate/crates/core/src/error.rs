use std::io;

use thiserror::Error;

pub type Result<T, E = PspError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PspError {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty sequence in {0}: no unmasked positions")]
    EmptySequence(&'static str),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PspError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        PspError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// True for failures that happen while running a computation rather than
    /// while reading inputs or configuration.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            PspError::Divergence { .. }
                | PspError::Checkpoint(_)
                | PspError::NonFinite(_)
                | PspError::Alignment(_)
        )
    }
}
