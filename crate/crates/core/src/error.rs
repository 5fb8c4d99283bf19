use thiserror::Error;

/// Errors raised by the numerical operations of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not a double-well potential: {0}")]
    NotDoubleWell(String),

    #[error("quadrature did not reach tolerance {tol:e} (error estimate {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("shooting diverged: {0}")]
    ShootingDiverged(String),

    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),

    #[error("solution collapsed to a constant state")]
    CollapsedToConstant,

    #[error("transition separation {separation} is below the minimum {minimum}")]
    SeparationTooSmall { separation: f64, minimum: f64 },

    #[error("energy increased at step {step}: {before} -> {after}")]
    EnergyIncrease { step: usize, before: f64, after: f64 },

    #[error("flow integration left the accurate regime: {0}")]
    FlowBlowup(String),

    #[error("eigensolver stagnated after {iterations} iterations (worst residual {residual:e})")]
    EigensolverStagnation { iterations: usize, residual: f64 },

    #[error("interface is empty")]
    EmptyInterface,

    #[error("multiplicity of component {component} is ambiguous (mass ratio {ratio:.4})")]
    MultiplicityAmbiguous { component: usize, ratio: f64 },

    #[error("field is not a critical point: residual {residual:e} exceeds {tol:e}")]
    NotCritical { residual: f64, tol: f64 },

    #[error("tubular neighbourhoods overlap: {0}")]
    TubeOverlap(String),

    #[error("discrete maximum principle violated: sup|u| = {0}")]
    MaximumPrinciple(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
