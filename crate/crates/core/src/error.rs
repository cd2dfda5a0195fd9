use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("domain truncation: {0}")]
    Truncation(String),

    #[error("stationary solver did not converge after {iterations} iterations (last update {last_update:.3e})")]
    Convergence { iterations: usize, last_update: f64 },

    #[error("discretization error: {0}")]
    Discretization(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("invalid series: {0}")]
    Series(String),
}

impl Error {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Discretization(_)
                | Error::InternalConsistency(_)
                | Error::Integration { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
