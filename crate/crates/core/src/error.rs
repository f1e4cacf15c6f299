use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A density or gradient was requested outside the model support.
    #[error("point outside support: field `{field}` = {value}")]
    Domain { field: &'static str, value: f64 },

    #[error("capacity exceeded for {what}: required {required}, allowed {allowed}")]
    Capacity {
        what: &'static str,
        required: u128,
        allowed: u128,
    },

    #[error("model does not support {0}")]
    Capability(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("hyperparameter chain diverged at step {step}: |u| = {magnitude}; tail {tail:?}")]
    Divergence {
        step: usize,
        magnitude: f64,
        tail: Vec<f64>,
    },

    #[error("estimation failed: {0}")]
    EstimationFailure(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(what: impl FnOnce() -> String, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(what()))
    }
}
