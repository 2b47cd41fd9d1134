use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no travelling wave: {0}")]
    NoWave(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("step size {dt} exceeds stability bound {bound}")]
    StepSize { dt: f64, bound: f64 },
    #[error("level-set tracking failed: {0}")]
    Tracking(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("sandwich failure: {0}")]
    Sandwich(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}
