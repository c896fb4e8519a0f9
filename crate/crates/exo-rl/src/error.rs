use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExoRlError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment validation failed: {0}")]
    EnvValidation(String),

    #[error("operation unsupported for this environment: {0}")]
    Unsupported(String),

    #[error("sample count overflow: computed magnitude {0:.3e}")]
    SampleCountOverflow(f64),

    #[error("classifier error: {0}")]
    Classifier(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExoRlError>;
