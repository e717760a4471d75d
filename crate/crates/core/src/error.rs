use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scene parse error in {path}: {message}")]
    SceneParse { path: PathBuf, message: String },
    #[error("obj parse error in {path}, line {line}: {message}")]
    ObjParse { path: PathBuf, line: usize, message: String },
    #[error("missing mesh file {0}")]
    MissingObj(PathBuf),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("partitioning failed: {0}")]
    Partition(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors raised by the rank group (connection loss or lockstep violations).
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::Protocol(_))
    }
}
