use thiserror::Error;

/// Failures that stop a run before any task executes. All map to exit code 2.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("unsupported task kind `{kind}` at {path}")]
    UnsupportedTask { path: String, kind: String },

    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),
}

impl CliError {
    pub fn validation(path: impl Into<String>, message: impl ToString) -> Self {
        CliError::Validation {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::UnsupportedTask { .. } => "unsupported-task",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    /// Field path the error refers to, when there is one.
    pub fn path(&self) -> Option<&str> {
        match self {
            CliError::Parse { path, .. }
            | CliError::Validation { path, .. }
            | CliError::UnsupportedTask { path, .. }
            | CliError::Io { path, .. } => Some(path),
            CliError::Usage(_) => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
