//! Crate-wide error type and exit-code classification.

use std::path::PathBuf;

/// Errors produced by any stage of the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem-level failure while reading or writing `path`.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// A JSON header could not be parsed or contained inconsistent fields.
    #[error("malformed header {path}: {message}")]
    Header { path: PathBuf, message: String },

    /// A raw payload file did not have the byte length implied by its header.
    #[error("payload length mismatch in {path}: expected {expected} bytes, found {found}")]
    PayloadLength {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    /// A sample value was NaN or infinite.
    #[error("non-finite sample at (x={x}, y={y}, band={band})")]
    NonFinite { x: usize, y: usize, band: usize },

    /// A configuration value is out of range or internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs passed to an operation do not agree in shape.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data is structurally valid but semantically unusable
    /// (e.g. no labeled pixels, degenerate region layout).
    #[error("invalid data: {0}")]
    Data(String),

    /// A numerical procedure failed to produce a usable result
    /// (singular system, non-convergence, non-finite intermediate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Wraps an error with the pipeline stage it occurred in.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad invocation or configuration (exit code 1).
    Usage,
    /// Unreadable or inconsistent input data (exit code 2).
    Data,
    /// Numerical failure (exit code 3).
    Numerical,
}

impl Error {
    /// Attach a pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Classify this error for exit-code purposes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Numerical(_) => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
