use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{file}:{line}: {message}")]
    Load {
        file: String,
        line: u64,
        message: String,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("missing run artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("schema mismatch: missing {missing:?}, extra {extra:?}")]
    Schema {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Walks through context wrappers to the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 configuration, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Numeric(_) => 4,
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
