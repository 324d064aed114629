//! Error type shared across the crate.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("Coulomb kernel is singular at the origin")]
    SingularOrigin,

    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    QuadratureNoConvergence { requested: f64, achieved: f64 },

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integration blow-up: non-finite state for particle {particle} at step {step} ({ensemble})")]
    IntegrationBlowUp {
        particle: usize,
        step: u64,
        ensemble: &'static str,
    },

    #[error("degenerate zero data: {0}")]
    DegenerateData(String),

    #[error("empty ensemble rejected")]
    EmptyEnsemble,

    #[error("unequal point counts: {left} vs {right}")]
    UnequalCounts { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
