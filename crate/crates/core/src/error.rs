use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("time {time} lies outside the grid [0, {horizon}]")]
    Range { time: f64, horizon: f64 },
    #[error("non-finite state on interval {interval}")]
    Blowup { interval: usize },
    #[error("transform inversion defect {defect:e} at node {node} exceeds tolerance {tolerance:e}")]
    Inversion {
        node: usize,
        defect: f64,
        tolerance: f64,
    },
    #[error("Riccati denominator {denominator:e} fell below floor at t = {time}")]
    RiccatiSingular { time: f64, denominator: f64 },
    #[error("Riccati solution lost positivity (P = {value:e}) at t = {time}")]
    Positivity { time: f64, value: f64 },
    #[error("specification outside closed-form scope: {0}")]
    Scope(String),
    #[error("every one of {0} Monte Carlo samples failed")]
    EnsembleFailure(usize),
    #[error("i/o or format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Format(e.to_string())
    }
}
