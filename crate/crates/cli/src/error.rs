use std::path::PathBuf;

use aidecide_core::error::{Error as CoreError, ErrorKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: CoreError,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    /// 2 for configuration problems, 3 for data and IO, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Module { source, .. } => match source.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            },
        }
    }
}

/// Attributes a core error to the module that raised it.
pub(crate) trait Attribute<T> {
    fn within(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Attribute<T> for Result<T, CoreError> {
    fn within(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Module { module, source })
    }
}
