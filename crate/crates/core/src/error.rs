//! Error types shared across the crate.

/// Errors surfaced by instance construction, the simulator ledger, and the
/// identification algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The pivot position is not strict: `theta_[m] == theta_[m+1]`, so the
    /// instance complexity is infinite and gaps are undefined.
    #[error("degenerate pivot m={m}: theta_[m] == theta_[m+1] (= {value})")]
    DegeneratePivot { m: usize, value: f64 },

    /// The instance itself is malformed (means outside (0,1), too few arms).
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A time budget is too small for the requested operation.
    #[error("insufficient budget: need at least {need}, have {have} ({what})")]
    InsufficientBudget { need: u64, have: u64, what: String },

    /// A pull would push an agent over the declared round or horizon budget.
    #[error("budget exceeded: agent {agent} at {attempted} pulls vs limit {limit}")]
    BudgetExceeded { agent: usize, attempted: u64, limit: u64 },

    /// Ending one more round would exceed the configured round cap.
    #[error("round cap exceeded: cap {cap}")]
    RoundCapExceeded { cap: usize },

    /// A generator spec cannot be satisfied (e.g. required gap does not fit
    /// inside (0,1) after clamping).
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),

    /// Generator or algorithm parameters outside their documented ranges.
    #[error("invalid params: {0}")]
    InvalidParams(String),

    /// Configuration file / CLI configuration problems.
    #[error("bad config: {0}")]
    BadConfig(String),

    /// I/O wrapper for the bench harness.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
