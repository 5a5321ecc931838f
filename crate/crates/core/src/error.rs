use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("corpus has no accepted samples")]
    EmptyCorpus,

    #[error("line {line}: sample has neither code nor docstring")]
    EmptySample { line: usize },

    #[error("document {doc_index} has no tokens")]
    EmptyDocument { doc_index: usize },

    #[error("query has no embeddable tokens")]
    UnembeddableQuery,

    #[error("embedding file has no vector for id {0:?}")]
    MissingEmbedding(String),

    #[error("embedding file lists id {0:?} more than once")]
    DuplicateEmbedding(String),

    #[error("embedding file has unknown id {0:?}")]
    UnknownEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid docid character {ch:?} at offset {offset}")]
    InvalidDocId { offset: usize, ch: char },

    #[error("docid must not be empty")]
    EmptyDocId,

    #[error("duplicate docid {0:?}")]
    DuplicateDocId(String),

    #[error("input sequence is empty")]
    EmptyInput,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("loss is not finite")]
    NonFiniteLoss,

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            what,
            detail: detail.to_string(),
        }
    }

    /// True for errors caused by bad input or arguments rather than a
    /// failure inside the pipeline.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::NonFiniteLoss)
    }
}
