use std::io;
use std::path::{Path, PathBuf};

/// Process exit codes of the `modlens` binary.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad flags, bad configuration, or data that cannot be used as requested.
    pub const CONFIG: i32 = 2;
    /// Joint training ended with every attempt degenerate.
    pub const TRAINING: i32 = 3;
    /// Reading or writing a file failed.
    pub const IO: i32 = 4;
    /// A corpus, checkpoint or log file is malformed.
    pub const DATA: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(transparent)]
    Core(#[from] modlens_core::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn bad_file(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Error::BadFile { path: path.as_ref().to_path_buf(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Malformed { .. } | Error::BadFile { .. } => exit::DATA,
            Error::Config(_) => exit::CONFIG,
            Error::Training(_) => exit::TRAINING,
            Error::Core(e) => match e {
                modlens_core::Error::InsufficientData(_) | modlens_core::Error::InvalidArgument(_) => exit::CONFIG,
                _ => exit::DATA,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
