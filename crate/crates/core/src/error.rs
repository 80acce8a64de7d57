use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("autodiff: {0}")]
    Autodiff(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("small-gain condition violated: gamma_m = {gamma_m} but the margin is {margin}")]
    Margin { gamma_m: f64, margin: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
