use thiserror::Error;

/// Errors raised by the models, integrators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A derived quantity in a physical-to-scaled conversion came out
    /// non-finite or non-positive. `formula` names the offending expression.
    #[error("scaling failed evaluating {formula}: got {value}")]
    Scaling { formula: &'static str, value: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("grid too small: need at least {required} theta points, got {given}")]
    GridTooSmall { required: usize, given: usize },

    #[error("momentum spacing mismatch: grid has {grid}, parameters imply {expected}")]
    SpacingMismatch { grid: f64, expected: f64 },

    #[error(
        "not in two-level regime: {leaked:.3e} of the population lies outside levels {upper} and {lower}"
    )]
    NotTwoLevel { upper: i64, lower: i64, leaked: f64 },

    #[error("Bloch angle needs a resonant state with real polarization: {0}")]
    OffResonance(String),

    #[error("ladder edge occupation {occupation:.3e} exceeds {limit:.1e} at tau = {tau} (ladder [{n_min}, {n_max}]); widen the ladder")]
    LadderGuard { tau: f64, occupation: f64, limit: f64, n_min: i64, n_max: i64 },

    #[error("trajectory too short: {0}")]
    TooShort(String),

    #[error(transparent)]
    Integration(#[from] crate::integrate::IntegrationError),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
