use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown prompt template {0}")]
    UnknownTemplate(String),

    #[error("missing placeholder {0}")]
    MissingPlaceholder(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("provider {provider} rejected the request: {message}")]
    Content { provider: String, message: String },

    #[error("malformed request: {0}")]
    MalformedRequest(String),

    #[error("zero-information input: {0}")]
    EmptyInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("extraction response could not be parsed")]
    Extraction { raw: String },

    #[error("relation response could not be parsed")]
    RelationParse { raw: String },

    #[error("judgment error: {0}")]
    Judgment(String),

    #[error("{what} line {line}: {message}")]
    Parse {
        what: &'static str,
        line: usize,
        message: String,
    },

    #[error("query syntax error at line {line}, column {column}: {message}")]
    QuerySyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("cyclic subclass axioms: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("invalid IRI {0:?}")]
    InvalidIri(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
