use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical or dimensionless parameter is outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid grid, mask, run or scenario configuration. `field` is a dotted path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Integration produced non-finite values or exceeded the blow-up threshold.
    #[error("numerical blow-up at tau = {tau}: {message}")]
    BlowUp { tau: f64, message: String },

    /// A numerical procedure (quadrature, fit) failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
