use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config key `{key}`: {message}")]
    ConfigKey { key: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("degenerate director: min |d| = {min_norm:.3e} at or below {threshold}")]
    DegenerateDirector { min_norm: f64, threshold: f64 },

    #[error("blow-up at t = {t}: non-finite values in {field}")]
    BlowUp { t: f64, field: &'static str },

    #[error("temperature positivity violated: min theta = {min_theta:.6e}")]
    Positivity { min_theta: f64 },

    #[error("energy concentrates below the smallest admissible radius {radius:.4}")]
    ConcentrationAtGridScale { radius: f64 },

    #[error("inconclusive concentration segment at t = {t}: {reason}")]
    InconclusiveSegment { t: f64, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigKey {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error came from a numerical failure of a run rather than
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::DegenerateDirector { .. }
                | Error::Positivity { .. }
                | Error::ConcentrationAtGridScale { .. }
        )
    }
}
