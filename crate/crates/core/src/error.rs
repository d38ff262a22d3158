use std::path::PathBuf;

use thiserror::Error;

/// One tensor whose stored shape or presence disagrees with what was expected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorMismatch {
    pub name: String,
    pub expected: Option<Vec<usize>>,
    pub found: Option<Vec<usize>>,
}

impl std::fmt::Display for TensorMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.expected, &self.found) {
            (Some(e), Some(g)) => write!(f, "{} (expected {:?}, found {:?})", self.name, e, g),
            (Some(e), None) => write!(f, "{} (expected {:?}, missing)", self.name, e),
            (None, Some(g)) => write!(f, "{} (unexpected, shape {:?})", self.name, g),
            (None, None) => write!(f, "{}", self.name),
        }
    }
}

fn join_mismatches(m: &[TensorMismatch]) -> String {
    m.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("user {0} is out of range")]
    UnknownUser(u32),

    #[error("user {0} is not a cascade initiator")]
    NotAnInfluencer(u32),

    #[error("malformed tensor archive: {0}")]
    Archive(String),

    #[error("tensor shape mismatch: {}", join_mismatches(.0))]
    ShapeMismatch(Vec<TensorMismatch>),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged: loss {loss} exceeds 10x the initial loss {initial}")]
    Diverged { loss: f64, initial: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
