//! Error type for file handling, configuration, and command plumbing.

use std::fmt;
use std::path::Path;

use amlab_core::CoreError;

#[derive(Debug)]
pub enum Error {
    /// I/O failure with the path it happened on.
    Io {
        path: String,
        source: std::io::Error,
    },
    /// Config file did not parse or failed schema validation.
    Json { path: String, message: String },
    /// An IDX file opened with the wrong magic number.
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    /// An IDX file whose payload does not match its header.
    IdxLength {
        path: String,
        needed: usize,
        got: usize,
    },
    /// IDX image and label files disagree on the sample count.
    CountMismatch { images: usize, labels: usize },
    /// A checkpoint file is unreadable or internally inconsistent.
    Checkpoint { path: String, reason: String },
    /// Invalid configuration or command arguments.
    Config(String),
    /// An error bubbled up from the math core.
    Core(CoreError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code this error maps to: 2 for divergence, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(CoreError::Diverged { .. }) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{path}: {source}"),
            Error::Json { path, message } => write!(f, "{path}: {message}"),
            Error::BadMagic {
                path,
                expected,
                found,
            } => write!(f, "{path}: bad magic {found:#010x} (expected {expected:#010x})"),
            Error::IdxLength { path, needed, got } => {
                write!(f, "{path}: expected {needed} payload bytes, found {got}")
            }
            Error::CountMismatch { images, labels } => write!(
                f,
                "image count {images} does not match label count {labels}"
            ),
            Error::Checkpoint { path, reason } => write!(f, "{path}: {reason}"),
            Error::Config(msg) => write!(f, "{msg}"),
            Error::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<CoreError> for Error {
    fn from(e: CoreError) -> Error {
        Error::Core(e)
    }
}
