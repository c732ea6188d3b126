use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, rates or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed wire data. `field` names the header field that failed.
    #[error("protocol error in `{field}`: {detail}")]
    Protocol { field: &'static str, detail: String },

    /// NaN/Inf where a finite value is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn protocol(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Protocol {
            field,
            detail: detail.into(),
        }
    }

    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 protocol, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Protocol { .. } => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
