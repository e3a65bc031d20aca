use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown condition label `{0}`")]
    UnknownCondition(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("records out of order: trial {found} follows trial {previous}")]
    OutOfOrder { previous: u32, found: u32 },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
