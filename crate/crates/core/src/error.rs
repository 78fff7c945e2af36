use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("label grids differ")]
    GridMismatch,

    #[error("graphon row {label} has zero degree")]
    ZeroDegree { label: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("state blew up at step {step} (|x| = {magnitude:e})")]
    BlowUp { step: usize, magnitude: f64 },

    #[error("action {action:?} for label {label} at step {step} lies outside the action space")]
    ActionOutside {
        label: usize,
        step: usize,
        action: Vec<f64>,
    },

    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("ensembles do not share noise streams")]
    StreamMismatch,

    #[error("zero denominator in ratio")]
    ZeroDenominator,

    #[error("picard iteration diverging at iterate {iterate}: distance {distance:e} exceeds 10x the initial {initial:e}; the horizon may exceed the contraction horizon")]
    Divergence {
        iterate: usize,
        distance: f64,
        initial: f64,
    },

    #[error("search budget exceeded: {combinations} combinations > {budget}")]
    BudgetExceeded { combinations: f64, budget: usize },

    #[error("empty action grid")]
    EmptyActionGrid,

    #[error("coupling first marginal differs from the target at label {label}")]
    MarginalViolation { label: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing trajectories: {0}")]
    MissingTrajectories(String),

    #[error("transport solver failed: {0}")]
    Transport(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
