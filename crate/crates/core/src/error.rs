use thiserror::Error;

/// Errors raised by the library when a precondition on an input is violated.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("prior must contain at least one slot")]
    EmptyPrior,
    #[error("prior value at index {index} is not strictly positive: {value}")]
    NonPositivePrior { index: usize, value: f64 },
    #[error("zipf exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("prior cap {cap} cannot be met by {slots} slots (needs cap >= 1/slots)")]
    InfeasibleCap { cap: f64, slots: usize },
    #[error("tau is undefined for this prior: every frequency term vanishes")]
    DegeneratePrior,
    #[error("appearance count l={l} must satisfy 1 <= l <= n={n}")]
    InvalidAppearance { l: u64, n: u64 },
    #[error("interval [{lo}, {hi}] is not a sub-interval of [0, 1] with lo <= hi")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("replicate/trial count must be at least 1")]
    ZeroCount,
    #[error("flip rate {0} must lie in [0, 1)")]
    InvalidRate(f64),
    #[error("e_plus + e_minus = {0} must be < 1 (noise is not identifiable otherwise)")]
    NonIdentifiableNoise(f64),
    #[error("transition matrix row {row} is not a probability vector")]
    NotRowStochastic { row: usize },
    #[error("matrix shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("transition matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("label list must not be empty")]
    EmptyLabels,
    #[error("distribution is not a proper probability vector")]
    ImproperDistribution,
    #[error("distribution entries must sum to 1 (sum = {0})")]
    UnnormalizedDistribution(f64),
    #[error("operation requires binary labels, got {0} classes")]
    NotBinary(usize),
    #[error("parameter `{name}` = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("Bernoulli KL divergence is infinite for a={a}, b={b}")]
    InfiniteDivergence { a: f64, b: f64 },
    #[error("threshold k={k} exceeds trial count l={l}")]
    ThresholdTooLarge { k: u64, l: u64 },
    #[error("scenario list must not be empty")]
    NoScenarios,
    #[error("non-finite loss value at index {0}")]
    NonFiniteLoss(usize),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected,
        })
    }
}
