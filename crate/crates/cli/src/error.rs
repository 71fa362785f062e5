use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit code for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for configuration and I/O errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code when a closed-form/protocol cross-check fails.
pub const EXIT_NUMERICAL: i32 = 2;
/// Exit code when some sweeps failed and the rest were written.
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },

    /// A semantically invalid value; `field` is a dotted path such as
    /// `sweep[1].temperatures[0]`.
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Field { field: String, line: Option<usize>, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("missing table {0}")]
    MissingTable(String),

    #[error("unknown figure {0:?}; expected one of {1}")]
    UnknownFigure(String, String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field { field: field.into(), line: None, message: message.into() }
    }
}
