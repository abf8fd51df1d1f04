use std::path::PathBuf;

use crate::token::TokenId;

/// Errors raised across the lab. Each variant maps to a stable code (see [`Error::code`])
/// so that service clients can match on them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty base")]
    EmptyBase,
    #[error("degenerate length bound: {0} (need at least 2)")]
    DegenerateLength(usize),
    #[error("single-token segment below granularity: sentence {0} has fewer than 2 tokens before EOS")]
    SegmentTooShort(usize),
    #[error("base sentence {index} has length {len}, above the bound {max_len}")]
    BaseTooLong { index: usize, len: usize, max_len: usize },
    #[error("meaning undefined for incomplete sentences")]
    IncompleteSentence,
    #[error("{path}:{line}:{column}: {msg}")]
    Parse { path: PathBuf, line: usize, column: usize, msg: String },
    #[error("unknown token symbol {0:?}")]
    UnknownSymbol(String),
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("token id {token} out of range for alphabet of size {k}")]
    TokenOutOfRange { token: TokenId, k: usize },
    #[error("context has {got} entries, expected {expected}")]
    ContextLength { got: usize, expected: usize },
    #[error("invalid discriminant output: {0}")]
    InvalidLogits(String),
    #[error("invalid temperature {0}")]
    InvalidTemperature(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: f64, budget: u64 },
    #[error("pivot restriction not bijective: gcd({weight}, {k}) = {gcd}")]
    PivotNotBijective { weight: u64, k: usize, gcd: u64 },
    #[error("ℓ must be ≥ 2 (got {0})")]
    EllTooSmall(usize),
    #[error("bijectivity hypothesis violated at runtime: {0}")]
    HypothesisViolated(String),
    #[error("no plan found within {0} settling inputs")]
    PlanNotFound(usize),
    #[error("plan validation failed: {0}")]
    PlanValidation(String),
    #[error("empty label set")]
    EmptyLabels,
    #[error("zero total votes in example {0}")]
    ZeroVotes(usize),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("replay diverged at turn {turn}: {msg}")]
    ReplayDiverged { turn: usize, msg: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyBase | Error::DegenerateLength(_) | Error::SegmentTooShort(_) | Error::BaseTooLong { .. } => {
                "sigma_precondition"
            }
            Error::IncompleteSentence => "incomplete_sentence",
            Error::Parse { .. } => "parse",
            Error::UnknownSymbol(_) | Error::TokenOutOfRange { .. } | Error::ContextLength { .. } => "validation",
            Error::InvalidAlphabet(_) | Error::InvalidArgument(_) | Error::InvalidTemperature(_) => "invalid_argument",
            Error::InvalidLogits(_) => "invalid_discriminant_output",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::PivotNotBijective { .. } => "pivot_not_bijective",
            Error::EllTooSmall(_) => "ell_too_small",
            Error::HypothesisViolated(_) => "hypothesis_violated",
            Error::PlanNotFound(_) => "plan_not_found",
            Error::PlanValidation(_) => "plan_validation",
            Error::EmptyLabels => "empty_labels",
            Error::ZeroVotes(_) => "zero_votes",
            Error::ModelMismatch(_) => "model_mismatch",
            Error::ReplayDiverged { .. } => "replay_diverged",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Enumeration budget shared by the exhaustive analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget(pub u64);

impl Default for Budget {
    fn default() -> Self {
        Budget(20_000_000)
    }
}

impl Budget {
    /// Fails when `base^exp` exceeds the budget.
    pub fn check_pow(&self, base: usize, exp: usize) -> Result<()> {
        self.check((base as f64).powi(exp as i32))
    }

    pub fn check(&self, needed: f64) -> Result<()> {
        if needed > self.0 as f64 {
            Err(Error::BudgetExceeded { needed, budget: self.0 })
        } else {
            Ok(())
        }
    }
}
