use std::path::PathBuf;

/// Errors produced by the alignment engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} out of range: {value} (valid: {valid})")]
    Range {
        what: &'static str,
        value: usize,
        valid: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("instance exceeds brute-force limits: {0}")]
    LimitsExceeded(String),

    #[error("cannot score alignment: {0}")]
    Scoring(String),

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
