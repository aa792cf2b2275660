use std::io;
use std::path::PathBuf;

/// Errors of the experiment pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Failure inside the numeric core or a simulator.
    #[error(transparent)]
    Core(#[from] gossipmf_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A line that is not in the expected format.
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    /// Well-formed input with values outside their allowed range.
    #[error("{}:{line}: {msg}", path.display())]
    Validation { path: PathBuf, line: usize, msg: String },

    /// A dataset that parses but breaks a structural property.
    #[error("{0}")]
    Dataset(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Machine-readable category printed by the CLI as `error[category]`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Core(e) => e.category(),
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } | Error::Dataset(_) => "validation",
            Error::Config(_) => "config",
            Error::Json(_) => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
