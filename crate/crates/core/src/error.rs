use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::temporal_graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no events")]
    NoEvents,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("split segment `{0}` is empty")]
    EmptySegment(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("memory update for node {node} at t={t} precedes its last update at t={last_update}")]
    TimeTravel {
        node: NodeId,
        t: f64,
        last_update: f64,
    },

    #[error("batch starts at t={start} but the bank has already consumed events up to t={clock}")]
    OutOfOrder { start: f64, clock: f64 },

    #[error("no evaluation event touches an inductive node")]
    NoInductiveEvents,

    #[error("stream carries no node labels")]
    MissingLabels,

    #[error("every {segment} label is {label}; a classifier needs both classes")]
    DegenerateLabels { segment: &'static str, label: bool },

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: msg.into(),
        }
    }

    /// Configuration problems map to exit status 1, everything else to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

pub(crate) fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}
