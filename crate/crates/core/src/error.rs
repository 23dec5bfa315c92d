use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range (class count {classes})")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("label {label} is outside the head mask")]
    LabelOutsideMask { label: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: bad magic number 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated file, expected {expected} bytes but found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("invalid task schedule: {0}")]
    InvalidTasks(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at task {task}, epoch {epoch}, batch {batch}")]
    Diverged {
        task: usize,
        epoch: usize,
        batch: usize,
    },

    #[error("parameter index {index} out of range ({len} parameters)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("malformed report: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
