// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias with [`Error`] as the error type.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building, running or analysing a model.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Model configuration violates a structural invariant.
    #[error("invalid model config: {0}")]
    Config(String),

    /// A tensor has the wrong shape, or a weight bundle is incomplete.
    #[error("shape mismatch for {name}: expected {expected:?}, got {got:?}")]
    Shape {
        /// Tensor or vector name.
        name: String,
        /// Expected dimensions.
        expected: Vec<usize>,
        /// Observed dimensions.
        got: Vec<usize>,
    },

    /// A token id lies outside the vocabulary.
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange {
        /// Offending id.
        id: usize,
        /// Vocabulary size.
        vocab_size: usize,
    },

    /// A layer, head or position index lies outside its valid range.
    #[error("{what} index {index} out of range ({range})")]
    IndexOutOfRange {
        /// Kind of index (layer, head, position, ...).
        what: &'static str,
        /// Offending index.
        index: usize,
        /// Human-readable valid range.
        range: String,
    },

    /// An empty input where at least one element is required.
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A weight file could not be decoded.
    #[error("weight file format: {0}")]
    Format(String),

    /// A JSONL line failed to parse.
    #[error("{path}:{line}: malformed record: {reason}")]
    Record {
        /// Source file.
        path: PathBuf,
        /// 1-based line number.
        line: usize,
        /// Parser message.
        reason: String,
    },

    /// Vocabulary problem (duplicate entry, missing special token, ...).
    #[error("vocabulary: {0}")]
    Vocab(String),

    /// Statistical routine given too few or degenerate samples.
    #[error("statistics: {0}")]
    Stats(String),

    /// Geometry routine (LDA, probe) precondition failed.
    #[error("geometry: {0}")]
    Geometry(String),

    /// Trace lacks an intermediate required by the caller.
    #[error("trace is missing {0}")]
    MissingIntermediate(&'static str),

    /// Filesystem error with the path that caused it.
    #[error("{path}: {source}")]
    Io {
        /// Path being read or written.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },

    /// Bare I/O error (in-memory readers and writers).
    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    /// JSON (de)serialization error.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(name: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            name: name.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    pub(crate) fn index(what: &'static str, index: usize, range: impl Into<String>) -> Self {
        Error::IndexOutOfRange {
            what,
            index,
            range: range.into(),
        }
    }
}
