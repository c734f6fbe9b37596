use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// `Usage` marks caller mistakes (bad arguments, violated preconditions) and
/// maps to exit code 2 in the CLI; everything else is a runtime failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("corrupt corpus at {}: {reason}", path.display())]
    Corruption { path: PathBuf, reason: String },

    #[error("corrupt model file: {0}")]
    Model(String),

    #[error("training diverged at step {step}: {reason}")]
    Training { step: u64, reason: String },

    #[error("experiment stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error was caused by the caller rather than the run.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Usage(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
