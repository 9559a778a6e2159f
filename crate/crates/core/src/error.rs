use thiserror::Error;

/// Errors raised by the simulators and experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("arcs do not overlap: current {current}, added {added}")]
    DisjointUnion { current: String, added: String },

    #[error("exploration exhausted: no reachable mass left on the line")]
    Exhausted,

    #[error("potential file: {0}")]
    PotentialFormat(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::PotentialFormat(e.to_string())
    }
}
