//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("restriction matrix R(X'X)^-1 R' is singular")]
    SingularRestriction,
    #[error("first-stage fitted variation is numerically zero")]
    WeakDenominator,
    #[error("first-stage difference is exactly zero")]
    ZeroFirstStage,
    #[error("zero denominator: reference and focal propensities are equal")]
    ZeroDenominator,
    #[error("need at least two points to cluster")]
    TooFewPoints,
    #[error("invalid cluster count {k}: must be in 1..={j}")]
    BadK { k: usize, j: usize },
    #[error("judge {0} has no cases")]
    EmptyJudge(String),
    #[error("fewer than two judges remain after applying the minimum case count")]
    TooFewJudges,
    #[error("fewer than two usable clubs")]
    TooFewClubs,
    #[error("largest-group selection is empty")]
    EmptySelection,
    #[error("judge {0} has a single case; leave-one-out stringency undefined")]
    SingletonJudge(String),
    #[error("unknown scenario preset: {0}")]
    UnknownPreset(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
