//! Collaborative top-m arm identification.
//!
//! `K` agents sample Bernoulli arms in parallel and may exchange statistics
//! only at round boundaries. This crate provides:
//!
//! - the instance-complexity calculus (gaps, `H`, truncated `H`, selection
//!   complexity) over ground-truth instances,
//! - a deterministic round/budget-accounting simulator (the ledger),
//! - centralized PAC subroutines (LUCB and its fixed-budget variants),
//! - the fixed-time pipeline: successive-accepts-rejects, the recursive
//!   partition solver, certificate verification, and the guess-and-verify
//!   amplifier,
//! - the subsample-and-reduce pipeline down to `O(m)` candidates, plus m-th
//!   arm selection,
//! - a round-light fixed-confidence eliminator,
//! - instance generators (random benchmark families, the recursive
//!   block-structured hard family, and the hidden-bias family),
//! - a benchmark harness with CSV/JSON reporting, grid sweeps, property
//!   suites, and constant calibration.
//!
//! Everything is deterministic given `(master seed, trial id)`: each agent
//! draws from its own counter-based stream and trials are independent, so
//! they can run concurrently without affecting results.

pub mod bench;
pub mod calibrate;
pub mod central;
pub mod constants;
pub mod error;
pub mod fixed_conf;
pub mod fixed_time;
pub mod gen;
pub mod instance;
pub mod model;
pub mod props;
pub mod reduction;
pub mod sampling;

pub use constants::Constants;
pub use error::Error;
pub use instance::{ComplexityReport, Instance};
pub use model::{ArmStat, CollabConfig, ExperimentReport, Ledger, Sim};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
