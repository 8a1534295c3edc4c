use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// An argument violates a documented precondition (bad hyperparameter, empty input).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The caller broke an API contract (non-scalar loss, missing grads, bad id).
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}: total={total}, ce={ce}, retro={retro:?}"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        total: f64,
        ce: f64,
        retro: Option<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
