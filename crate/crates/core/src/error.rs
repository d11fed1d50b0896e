use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the workbench. Every message is prefixed with the
/// module that produced it so the CLI can print it on a single line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("imgio: depth {value} mm at pixel ({row}, {col}) outside [0, 100]")]
    DepthRange { row: usize, col: usize, value: f64 },

    #[error("imgio: malformed raster: {0}")]
    Parse(String),

    #[error("imgio: invalid manifest: {0}")]
    Manifest(String),

    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{module}: {message}")]
    Contract { module: &'static str, message: String },

    #[error("{module}: diverged: {message}")]
    Diverged { module: &'static str, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(module: &'static str, message: impl Into<String>) -> Self {
        Error::Contract {
            module,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
