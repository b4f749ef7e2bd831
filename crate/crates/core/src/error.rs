use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record, field `{field}`: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("instance `{id}`: {message}")]
    InvalidInstance { id: String, message: String },

    #[error("unknown adapter `{0}` (expected one of canonical-jsonl, es, et, gne, reman, eca)")]
    UnknownAdapter(String),

    #[error("unmapped labels under error policy: {}", .0.join(", "))]
    UnmappedLabels(Vec<String>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("embeddings: {0}")]
    Embeddings(String),

    #[error("training: {0}")]
    Training(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid_instance(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInstance {
            id: id.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by bad inputs (files, configs, data) rather
    /// than by an experiment going wrong.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::MalformedRecord { .. }
            | Error::InvalidInstance { .. }
            | Error::UnknownAdapter(_)
            | Error::UnmappedLabels(_)
            | Error::InvalidConfig(_)
            | Error::Embeddings(_) => true,
            Error::Training(_) | Error::Evaluation(_) => false,
            Error::Context { source, .. } => source.is_input_error(),
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context_with<F: FnOnce() -> String>(self, f: F) -> Result<T> {
        self.map_err(|e| e.context(f()))
    }
}
