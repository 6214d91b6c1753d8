use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("bad magic: expected \"DETL\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported index format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("dataset fingerprint mismatch: index built for {expected:016x}, dataset hashes to {found:016x}")]
    Fingerprint { expected: u64, found: u64 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Core(#[from] det_lsh_core::Error),
    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> HarnessError {
    let path = path.into();
    move |source| HarnessError::Io { path, source }
}
