use std::path::PathBuf;

use sqmle_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    /// More replicates failed than the experiment tolerates.
    #[error("{failed} of {total} replicates failed (limit {limit:.0}%)")]
    Replicates { failed: usize, total: usize, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Error {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Error {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// Process exit code: 1 usage, 2 numeric or optimization, 3 too many
    /// failed replicates.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Core(e) => match e {
                CoreError::Usage(_) | CoreError::Domain(_) | CoreError::Expr(_) => 1,
                _ => 2,
            },
            Error::Usage(_) | Error::Io { .. } | Error::Format { .. } => 1,
            Error::Replicates { .. } => 3,
        }
    }
}
