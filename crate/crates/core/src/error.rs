use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("profile grid does not cover t = {t} and no asymptotic extension applies")]
    Coverage { t: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("constraint unsatisfiable: {0}")]
    Constraint(String),

    #[error("trajectory diverged at t = {time} (|y| = {value:e})")]
    Divergence { time: f64, value: f64 },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("measurement failed: {0}")]
    Measurement(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("hyperbolicity violated: {0}")]
    Hyperbolicity(String),

    #[error("no periodic orbit: {0}")]
    NoOrbit(String),
}

impl Error {
    /// True for failures of an iterative method, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Divergence { .. }
                | Error::Numeric(_)
                | Error::Hyperbolicity(_)
                | Error::InvariantViolation(_)
                | Error::Measurement(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
