//! The single block of tunable universal constants.
//!
//! The identification guarantees only hold "for a large enough constant";
//! every such constant lives here with a default, and the bench config can
//! override any of them (`c0=`, `c1=`, ... keys).

use serde::{Deserialize, Serialize};

/// Tunable constants for budget formulas and structural knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Fixed-budget LUCB sufficiency constant (`central_approx_top`).
    pub c1: f64,
    /// Successive-accepts-rejects budget constant (`t2_budget`).
    pub c2: f64,
    /// Recursive partition solver budget constant (`t0_budget`).
    pub c0: f64,
    /// Guess-and-verify budget multiplier on top of `t0_budget`.
    pub c_gen: f64,
    /// Best-arm success threshold constant (`f` budget function).
    pub c_f: f64,
    /// Best-arm refusal threshold constant (`g` budget function).
    pub c_g: f64,
    /// Subset-best-arm sufficiency constant (per-copy budget threshold).
    pub c_a: f64,
    /// Reduction sufficiency constant (whole-pipeline budget threshold).
    pub c_r: f64,
    /// Cap on the number of subset-best-arm copies one reduction stage runs.
    /// The nominal copy count `ceil(25 m 4^gamma / delta^2)` is astronomically
    /// large for small delta; the cap keeps desk-scale runs tractable while
    /// the frequency thresholds keep their meaning.
    pub z_cap: u64,
    /// Cap on the repetition copies one guess-and-verify stage runs; the
    /// nominal `4^s` explodes for large horizons. Budgets are unaffected,
    /// only the executed sample of copies is truncated.
    pub general_copy_cap: u64,
    /// Override for the recursive solver's global round bound `R`.
    /// `None` derives it from `(n, K)`.
    pub round_bound_override: Option<usize>,
    /// Hard cap on fixed-confidence elimination rounds (epsilon underflows
    /// double precision long before this).
    pub fixed_conf_round_cap: usize,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c1: 8.0,
            c2: 8.0,
            c0: 16.0,
            c_gen: 20.0,
            c_f: 20.0,
            c_g: 2.0,
            c_a: 32.0,
            c_r: 64.0,
            z_cap: 10_000,
            general_copy_cap: 256,
            round_bound_override: None,
            fixed_conf_round_cap: 64,
        }
    }
}

impl Constants {
    /// Global round bound for the recursive partition solver.
    ///
    /// `max(1, ceil(log_{8/7}(ln n / (10 ln K)))) + ceil(log2 K^10) + 1`:
    /// enough recursion levels to shrink `n^{(7/8)^R}` below `K^10`, plus the
    /// rounds of the elimination endgame. `K` is clamped to 2 so the bound is
    /// defined for a single agent.
    pub fn round_bound(&self, n: usize, k: usize) -> usize {
        if let Some(r) = self.round_bound_override {
            return r;
        }
        let k = k.max(2) as f64;
        let ratio = (n.max(2) as f64).ln() / (10.0 * k.ln());
        let rec = if ratio > 1.0 {
            (ratio.ln() / (8.0f64 / 7.0).ln()).ceil() as usize
        } else {
            0
        };
        let endgame = (10.0 * k.log2()).ceil() as usize;
        rec.max(1) + endgame + 1
    }
}

/// `K^10` as the recursion-to-endgame threshold, saturating on overflow.
pub fn k_pow_10(k: usize) -> u64 {
    (k as u64).checked_pow(10).unwrap_or(u64::MAX)
}
