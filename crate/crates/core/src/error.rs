use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// Variants map onto the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 config, 3 geometry, 4 divergence, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Format { .. } | Error::Io { .. } => 2,
            Error::Geometry(_) => 3,
            Error::Divergence { .. } => 4,
            Error::Contract(_) | Error::Metric(_) => 1,
        }
    }
}
