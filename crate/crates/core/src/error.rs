use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("address {addr:#x} is outside the {limit:#x}-byte address space")]
    AddressOutOfRange { addr: u64, limit: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid chase pattern: {0}")]
    InvalidPattern(String),

    #[error("inconsistent level bits: {0}")]
    Classification(String),

    #[error("pattern {0} has no latency entry in this preset")]
    PatternUnavailable(crate::hierarchy::Pattern),

    #[error("iteration count {requested} exceeds the trace-length cap {cap}")]
    TraceTooLong { requested: u64, cap: u64 },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("no trace covers N={array_bytes} B, s={stride_bytes} B, k>={iterations}")]
    MissingCoverage {
        array_bytes: u64,
        stride_bytes: u64,
        iterations: u64,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown device `{0}`")]
    UnknownDevice(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    TraceFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn inference(msg: impl Into<String>) -> Self {
        Error::Inference(msg.into())
    }
}
