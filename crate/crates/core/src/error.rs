use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator and its I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input or intermediate left its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration. Carries every violation found.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// The requested node relationship does not exist in the topology.
    #[error("topology error: {0}")]
    Topology(String),

    /// An operation was attempted on a node in the wrong state (e.g. a dead relay).
    #[error("state error: {0}")]
    State(String),

    /// Malformed CSV or scenario input.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, grep-able code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "E_DOMAIN",
            Error::Config(_) => "E_CONFIG",
            Error::Topology(_) => "E_TOPOLOGY",
            Error::State(_) => "E_STATE",
            Error::Parse { .. } => "E_PARSE",
            Error::Io { .. } => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
