use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    DimMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),

    #[error("unsupported in executable graphs: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: malformed netpbm data at byte {offset}: {msg}")]
    Netpbm { path: PathBuf, offset: usize, msg: String },

    #[error("no mask found for image '{0}'")]
    MissingPair(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument { op, msg: msg.into() }
    }
}
