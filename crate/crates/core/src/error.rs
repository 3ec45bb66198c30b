use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MeveError>;

#[derive(Debug, Error)]
pub enum MeveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),

    #[error("unknown chunk id `{0}`")]
    UnknownChunk(String),

    #[error("no embedding for chunk `{0}`")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Network failure or non-200 status. Safe to retry.
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote service answered, but the answer violates the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("phase {phase} failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<MeveError>,
    },
}

impl MeveError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MeveError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_phase(self, phase: &'static str) -> Self {
        MeveError::Phase {
            phase,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through phase wrappers.
    pub fn root(&self) -> &MeveError {
        match self {
            MeveError::Phase { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self.root(), MeveError::Transport(_))
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            MeveError::Config(_) | MeveError::Io { .. } | MeveError::Parse { .. } | MeveError::EmptyCorpus
        )
    }
}
