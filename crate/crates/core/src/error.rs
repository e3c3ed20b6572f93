use thiserror::Error;

/// Errors surfaced by every stage of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Precondition violated by a caller-supplied value.
    #[error("validation: {0}")]
    Validation(String),

    /// Stream does not start with the expected magic bytes.
    #[error("bad magic")]
    BadMagic,

    /// Stream ended before the declared payload was complete.
    #[error("truncated payload")]
    Truncated,

    /// A parsed value falls outside the range the format allows.
    #[error("value out of range: {0}")]
    OutOfRange(String),

    /// Malformed text or binary content that is not a magic/length issue.
    #[error("parse: {0}")]
    Parse(String),

    /// Clustering left no cluster to grasp (everything was noise or gated out).
    #[error("empty affordance")]
    EmptyAffordance,

    /// Point cloud spans fewer than two dimensions.
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    /// Error raised by a named pipeline stage.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Walks through stage wrappers to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
