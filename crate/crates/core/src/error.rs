use std::path::PathBuf;

use crate::world::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: observer and target are coincident")]
    DegenerateGeometry,

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("phantoms do not transmit (node {0})")]
    PhantomTransmit(NodeId),

    #[error("unconfirmed track {0}")]
    UnconfirmedTrack(u64),

    #[error("insufficient population: need at least 2 PIDs, got {0}")]
    InsufficientPopulation(usize),

    #[error("feature schema mismatch")]
    SchemaMismatch,

    #[error("empty assignment problem: both domains are empty")]
    EmptyProblem,

    #[error("angle noise too large for UCM (variance {0} rad^2, limit 0.25)")]
    AngleNoiseTooLarge(f64),

    #[error("measurement covariance is not positive definite")]
    NonPdCovariance,

    #[error("empty MMSE window")]
    EmptyWindow,

    #[error("insufficient history: need {needed} AD epochs, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("no identity to steal: every real node is inside the victim neighborhood")]
    NoIdentityToSteal,

    #[error("no forwarder in range of attacker {0}")]
    NoForwarder(NodeId),

    #[error("no confirmed tracks")]
    NoConfirmedTracks,

    #[error("attack requires at least one malicious node")]
    NoMaliciousNode,

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Configuration problem, carrying the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}
