use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: non-finite samples, out-of-range levels, invalid config.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("oracle reply has no bracketed numeric list")]
    Parse,

    #[error("oracle reply has {got} values, expected {expected}")]
    Length { expected: usize, got: usize },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Json(_))
    }
}
