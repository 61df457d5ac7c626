use std::io;

use thiserror::Error;

/// Errors produced by the simulation, harvesting and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The input data does not support the requested analysis.
    #[error("data error: {0}")]
    Data(String),
    /// A binary or text file could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    /// Lorentzian fit did not converge to an interior corner frequency.
    #[error("fit did not converge: {reason} (best corner {best_corner:.6e} Hz, plateau {best_plateau:.6e})")]
    FitNotConverged {
        reason: String,
        best_corner: f64,
        best_plateau: f64,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
