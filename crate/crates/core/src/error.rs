use thiserror::Error;

/// Errors produced by the grading library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alternative probability {0} must lie strictly inside (0, 1)")]
    DegenerateAlternative(f64),

    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("ability {p} coincides with the alternative hypothesis")]
    ZeroSeparation { p: f64 },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("no question level separates the ability from its alternatives")]
    InfeasibleSeparation,

    #[error("f1 - f2 has no sign change on [{lo}, {hi}]; the instance is not a crossing case")]
    CaseMismatch { lo: f64, hi: f64 },

    #[error("ability {p} is within tolerance of grade threshold {threshold}")]
    DegenerateAbility { p: f64, threshold: f64 },

    #[error("ability {p} lies outside the ability domain [{lo}, {hi}]")]
    AbilityOutOfDomain { p: f64, lo: f64, hi: f64 },

    #[error("outcome must be 0 or 1, got {0}")]
    InvalidOutcome(u8),

    #[error("the maximum likelihood estimate is undefined for an empty history")]
    EmptyHistory,

    #[error("the session has already stopped")]
    SessionStopped,

    #[error("invalid response model: {0}")]
    InvalidModel(String),

    #[error("invalid ability domain: {0}")]
    InvalidDomain(String),

    #[error("invalid question bank: {0}")]
    InvalidBank(String),

    #[error("invalid grade scheme: {0}")]
    InvalidGrades(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
