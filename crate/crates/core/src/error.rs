use std::path::PathBuf;

/// Errors produced anywhere in the refinement pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// A precondition on an argument was violated (empty mask, non-positive depth, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A binary or text file did not match its declared layout.
    #[error("format error in {path}{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        path: String,
        offset: Option<u64>,
        message: String,
    },

    /// A line-oriented text file could not be parsed.
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A structured document is missing a field or has one of the wrong type.
    #[error("schema error: {field}: {message}")]
    Schema { field: String, message: String },

    /// The nonlinear or linear solver failed.
    #[error("solver error: {message}")]
    Solver { message: String },

    /// Scene generation could not produce a usable scene.
    #[error("generation error: {0}")]
    Generation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Short machine-readable category, used by the CLI for exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Solver { .. } => "solver",
            Error::Generation(_) => "generation",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
