use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: String,
        found: String,
    },

    #[error("singular parameters: {0}")]
    SingularParameters(String),

    #[error("step size underflow at t = {t:.6e} s (h = {h:.3e} s); system too stiff for the explicit integrator")]
    Stiffness { t: f64, h: f64 },

    #[error("state diverged at t = {t:.6e} s; estimated growth exponent {growth:.4e} 1/s")]
    Divergence { t: f64, growth: f64 },

    #[error("unresolved parameter path `{0}`")]
    UnresolvedPath(String),

    #[error("schema version mismatch: file has {found}, expected {expected}")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical integration itself.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stiffness { .. } | Error::Divergence { .. } | Error::SingularParameters(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
