use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{context}: {source}")]
    Core { context: String, source: lungmtl_core::Error },

    #[error("{}: malformed WAV file: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{}: unsupported WAV encoding: {reason}", path.display())]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error(
        "{}: features were extracted with MFCC settings {found:016x}, expected {expected:016x}; re-run `extract`",
        path.display()
    )]
    ConfigMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("{}: unreadable checkpoint: {reason}", path.display())]
    UnreadableCheckpoint { path: PathBuf, reason: String },

    #[error("{}: {reason}", path.display())]
    BadFile { path: PathBuf, reason: String },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn bad_file(path: impl AsRef<Path>, reason: impl Into<String>) -> Error {
        Error::BadFile { path: path.as_ref().to_path_buf(), reason: reason.into() }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for lungmtl_core::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Core { context: context(), source })
    }
}
