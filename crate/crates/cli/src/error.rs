use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit status for a successful run.
pub const EXIT_OK: u8 = 0;
/// At least one implemented randomness test failed.
pub const EXIT_TEST_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// A library error raised while running a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: rtn_trng::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use rtn_trng::Error as E;
        match self {
            CliError::Stage { source, .. } => match source {
                E::Config(_) | E::Domain(_) => EXIT_CONFIG,
                E::Data(_) | E::Format { .. } | E::FitNotConverged { .. } | E::Io(_) => EXIT_DATA,
            },
            CliError::Config(_) | CliError::ConfigFile { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Attaches a stage name to library errors.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for rtn_trng::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Stage { stage, source })
    }
}
