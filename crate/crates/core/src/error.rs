use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Unknown model name, unknown parameter, or malformed option.
    #[error("configuration error: {0}")]
    Config(String),

    /// A state or parameter outside the domain of the vector field.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Step-size underflow or step budget exhausted.
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("limit cycle not found after {iterations} Newton iterations (residual {residual:e})")]
    CycleNotFound { iterations: usize, residual: f64 },

    #[error("trajectory settled on a fixed point (|f| = {field_norm:e})")]
    NoOscillation { field_norm: f64 },

    /// Second multiplier too close to one for the closed-form basis.
    #[error("degenerate cycle: |b(T) - 1| = {gap:e}")]
    DegenerateCycle { gap: f64 },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("wrong perturbation kind: {0}")]
    WrongPerturbation(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("trajectory did not converge to the cycle (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("basis and cycle come from different computations")]
    MismatchedProvenance,
}
