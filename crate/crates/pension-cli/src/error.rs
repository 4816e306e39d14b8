use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error(transparent)]
    Core(#[from] pension_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn invalid(key: &str, reason: &str) -> Self {
        CliError::Invalid {
            key: key.to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 usage/parse, 3 validation, 4 I/O. Numerical failures during a run
    /// count as a failed verdict (1).
    pub fn exit_code(&self) -> i32 {
        use pension_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Parse(_) => 2,
            CliError::Invalid { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e {
                E::Invalid { .. } | E::Singular { .. } | E::GridMismatch { .. } | E::Replay(_) => 3,
                E::Domain(_) | E::Admissibility { .. } | E::BlowUp { .. } | E::Degenerate(_) => 1,
            },
        }
    }
}
