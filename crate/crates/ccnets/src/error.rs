use std::path::Path;

/// Failures of the command-line layer, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent data. Exit code 2.
    #[error("{0}")]
    Data(String),
    /// Non-finite losses, gradients or parameters. Exit code 3.
    #[error("{0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            context: path.display().to_string(),
            source,
        }
    }
}

impl From<ccnets_core::Error> for CliError {
    fn from(e: ccnets_core::Error) -> Self {
        use ccnets_core::Error as E;
        match e {
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::Config(_) => CliError::Usage(e.to_string()),
            E::Dimension { .. } | E::Domain(_) | E::State(_) | E::Precondition(_) => CliError::Data(e.to_string()),
        }
    }
}
