use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed wav header: {0}")]
    MalformedWav(String),

    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("truncated data chunk: header declares {declared} bytes, {available} available")]
    TruncatedData { declared: usize, available: usize },

    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),

    #[error("unsupported sample rate {rate} Hz: {reason}")]
    SampleRate { rate: u32, reason: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
