use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("temperature {temperature_k} K outside correlation range [{min_k}, {max_k}] K")]
    TemperatureOutOfRange { temperature_k: f64, min_k: f64, max_k: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("window [{lo}, {hi}] ns outside histogram support [{start}, {end}] ns")]
    WindowOutside { lo: f64, hi: f64, start: f64, end: f64 },

    #[error("undefined efficiency: {0}")]
    UndefinedEfficiency(String),

    #[error("inconsistent reference: leakage counts {leak} exceed input counts {input}")]
    InconsistentReference { leak: f64, input: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
