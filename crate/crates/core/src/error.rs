use thiserror::Error;

/// Errors raised by the spectral model, the HJB solvers and the simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time grid must start at 0 and be strictly increasing (violated at index {index})")]
    InvalidTimeGrid { index: usize },

    #[error("explicit march step {dt:.3e} exceeds the stability bound; largest admissible dt is {dt_max:.3e}")]
    StabilityViolation { dt: f64, dt_max: f64 },

    #[error("non-finite value at time slice {slice}, node {node:?}")]
    NonFinite { slice: usize, node: Vec<usize> },

    #[error("Picard iteration did not converge in {iterations} iterations (residuals: {residuals:?})")]
    PicardDiverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("Feynman-Kac weights underflowed on every path; reduce K (= {k}) or the horizon")]
    WeightUnderflow { k: f64 },

    #[error("value grid horizon {value_t} is shorter than the simulation horizon {sim_t}")]
    HorizonTooShort { value_t: f64, sim_t: f64 },

    #[error("grid solvers support at most 3 modes, got m = {m}")]
    GridTooLarge { m: usize },

    #[error("{0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            constraint: "must be finite and > 0".into(),
        })
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
