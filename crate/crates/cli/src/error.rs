use std::path::{Path, PathBuf};

/// Errors surfaced by the command-line layer, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] tglm_core::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context} [config {hash}]: {source}")]
    Run {
        context: String,
        hash: String,
        #[source]
        source: Box<CliError>,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for usage and configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(tglm_core::Error::Argument(_)) => 2,
            CliError::Run { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    pub fn in_run(self, context: impl Into<String>, hash: &str) -> Self {
        CliError::Run {
            context: context.into(),
            hash: hash.to_string(),
            source: Box::new(self),
        }
    }
}
