use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported player count {0} (supported: 2..=24)")]
    PlayerCount(usize),

    #[error("invalid coalition mask {mask:#x} for {n} players")]
    InvalidCoalition { mask: u32, n: usize },

    #[error("vector is not efficient: sum {sum:e} exceeds tolerance {tol:e}")]
    NotEfficient { sum: f64, tol: f64 },

    #[error("game is not normalized (v(N) = {0})")]
    NotNormalized(f64),

    #[error("value table has {got} entries, expected {expected}")]
    TableLength { expected: usize, got: usize },

    #[error("duplicate coalition {0:#x} in collection")]
    DuplicateCoalition(u32),

    #[error("weight {weight} for coalition {mask:#x} is not positive")]
    NonPositiveWeight { mask: u32, weight: f64 },

    #[error("weights do not balance the collection (residual {0:e})")]
    Unbalanced(f64),

    #[error("the core is empty (least-core value {0:e})")]
    EmptyCore(f64),

    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("random game generation gave up after {0} attempts")]
    RetryBudget(usize),

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64, last: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
