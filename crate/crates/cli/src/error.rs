use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] cvk_core::Error),
    #[error("optimization stopped without converging ({reason}), final d2 = {d2:e}")]
    NotConverged { reason: &'static str, d2: f64 },
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure, 4 for non-convergence.
    pub fn exit_code(&self) -> i32 {
        use cvk_core::Error as E;
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Input { .. } => 2,
            Self::Core(E::NonFinite { .. } | E::Pairing { .. } | E::MeanFieldNonConvergence { .. }) => 3,
            Self::Core(_) => 2,
            Self::NotConverged { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
