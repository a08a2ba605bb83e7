use std::path::PathBuf;

/// Errors produced anywhere in the feature, training and adaptation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV data: {0}")]
    Format(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("non-finite value in {0}")]
    NumericInput(&'static str),
    #[error("decomposition did not converge after {sweeps} sweeps")]
    Decomposition { sweeps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training data error: {0}")]
    TrainingData(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("corrupt STBF data: {0}")]
    Stbf(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
