use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {what} (error estimate {estimate:e})")]
    NumericalFailure { what: String, estimate: f64 },

    #[error(
        "degenerate pole on axis {axis}: gamma^2 = {gamma_sq} is within 1e-12 relative of nu_{k}^2 = {nu_sq}; perturb gamma"
    )]
    DegeneratePole {
        axis: usize,
        k: usize,
        gamma_sq: f64,
        nu_sq: f64,
    },

    #[error("hierarchy has {count} auxiliary operators, exceeding the budget of {budget}")]
    Capacity { count: u128, budget: usize },

    #[error("propagation diverged at step {step}: non-finite entry in auxiliary operator {ado}")]
    Divergence { step: usize, ado: usize },

    #[error("equilibration did not converge in {steps} steps (final residual {residual:e})")]
    Convergence { steps: usize, residual: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::DegeneratePole { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
