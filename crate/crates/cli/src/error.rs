use std::fmt;

use thiserror::Error;

/// Spec-file diagnostic anchored at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),

    #[error("invalid model: {0}")]
    Validation(#[from] martapprox::Error),

    #[error("{command}: {source}")]
    Module {
        command: &'static str,
        #[source]
        source: martapprox::Error,
    },

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn module(command: &'static str) -> impl FnOnce(martapprox::Error) -> CliError {
        move |source| CliError::Module { command, source }
    }
}
