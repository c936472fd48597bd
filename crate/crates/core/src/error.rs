use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("evaluation failed at row {row}: objective returned {value}")]
    Evaluation { row: usize, value: f64 },

    #[error("generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("source task {task}, generation {generation}: {source}")]
    SourceTask {
        task: usize,
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn at_generation(self, generation: usize) -> Self {
        Error::Generation {
            generation,
            source: Box::new(self),
        }
    }

    /// True for errors that stem from mismatched dimensions or configs.
    pub fn is_mismatch(&self) -> bool {
        match self {
            Error::Shape { .. } | Error::Parameter(_) => true,
            Error::Generation { source, .. } | Error::SourceTask { source, .. } => {
                source.is_mismatch()
            }
            _ => false,
        }
    }
}

/// Failures when decoding the binary archive and parameter files.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("file truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("{0} trailing bytes after checksum")]
    TrailingBytes(usize),

    #[error("malformed content: {0}")]
    Malformed(String),
}
