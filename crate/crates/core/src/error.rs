//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch in {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid attention matrix: {0}")]
    InvalidAttention(String),

    #[error("k too large for head count: k = {k}, n_heads = {n_heads} (need 2k <= n_heads)")]
    KTooLarge { k: usize, n_heads: usize },

    #[error("invalid intervention config: {0}")]
    InvalidConfig(String),

    #[error("invalid generation request: {0}")]
    InvalidGeneration(String),

    #[error("weight file: {0}")]
    WeightFile(#[from] WeightFileError),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Structured failures of the binary weight file loader.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightFileError {
    #[error("bad magic at offset 0: expected \"ARTW\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported format version {found} at offset 4: expected {expected}")]
    UnsupportedVersion { found: u16, expected: u16 },

    #[error("truncated header: expected {expected} bytes, file has {actual}")]
    TruncatedHeader { expected: usize, actual: usize },

    #[error(
        "truncated tensor blob: expected {expected} bytes from offset {offset}, found {actual}"
    )]
    TruncatedBlob {
        offset: usize,
        expected: usize,
        actual: usize,
    },

    #[error("trailing bytes: expected end of file at offset {offset}, found {extra} extra bytes")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("invalid spec in header: {0}")]
    InvalidHeaderSpec(String),

    #[error("non-finite value at offset {offset}")]
    NonFinite { offset: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
