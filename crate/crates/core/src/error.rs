use thiserror::Error;

/// Errors raised anywhere in the emulator pipeline.
#[derive(Debug, Error)]
pub enum SageError {
    /// Malformed or inconsistent user input (shapes, names, ranges).
    #[error("input error: {0}")]
    Input(String),

    /// Linear algebra failure that survived jitter escalation.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A persisted artifact was written by an incompatible schema.
    #[error("unsupported schema version {found} (expected major {expected})")]
    SchemaVersion { found: String, expected: u32 },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SageError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        SageError::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        SageError::Numerical(msg.into())
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        SageError::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SageError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 for input-type failures, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            SageError::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SageError::Input(_) => "input",
            SageError::Numerical(_) => "numerical",
            SageError::SchemaVersion { .. } => "schema_version",
            SageError::Parse { .. } => "parse",
            SageError::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, SageError>;
