use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory for tag {tag} leaves the unambiguous field of view: {theta_deg:.3} deg exceeds +/-{limit_deg:.3} deg")]
    OutOfFov {
        tag: usize,
        theta_deg: f64,
        limit_deg: f64,
    },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("feature configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("tag {tag}, window {window}: {source}")]
    Context {
        tag: String,
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn with_context(self, tag: &str, window: usize) -> Self {
        Error::Context {
            tag: tag.to_string(),
            window,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
