//! Single-agent PAC subroutines: LUCB, its fixed-budget variant, and the
//! reward-flipped bottom variant.
//!
//! All three pull through [`ArmPull`], so they run identically standalone
//! (tests, single-agent baselines) and inside one agent's share of a
//! collaborative round.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::sampling::ArmPull;
use crate::Result;

/// Confidence radius `beta(u, t) = sqrt(ln(5 n t^4 / (4 delta)) / (2u))`.
pub fn beta_radius(u: u64, t: u64, n: usize, delta: f64) -> f64 {
    debug_assert!(u >= 1 && t >= 1 && delta > 0.0 && delta < 1.0);
    let log_term = (5.0 * n as f64 / (4.0 * delta)).ln() + 4.0 * (t as f64).ln();
    (log_term / (2.0 * u as f64)).sqrt()
}

/// The radius as a value object (nonincreasing in `u`, nondecreasing in `t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRadius {
    pub u: u64,
    pub t: u64,
    pub n: usize,
    pub delta: f64,
}

impl ConfidenceRadius {
    pub fn value(&self) -> f64 {
        beta_radius(self.u, self.t, self.n, self.delta)
    }
}

/// Result of a centralized top/bottom approximation: the selected arms and
/// the empirical means of every arm of the sub-instance.
#[derive(Debug, Clone)]
pub struct CentralOutcome {
    pub set: Vec<usize>,
    pub estimates: BTreeMap<usize, f64>,
    pub total_pulls: u64,
}

/// Internal LUCB state over a fixed arm slice.
struct LucbState<'v> {
    arms: &'v [usize],
    pulls: Vec<u64>,
    successes: Vec<u64>,
    means: Vec<f64>,
    /// Scratch permutation of positions, sorted around the m-th mean.
    order: Vec<usize>,
    m: usize,
}

impl<'v> LucbState<'v> {
    fn init<P: ArmPull>(arms: &'v [usize], m: usize, sampler: &mut P) -> Result<Self> {
        let n = arms.len();
        let mut st = LucbState {
            arms,
            pulls: vec![0; n],
            successes: vec![0; n],
            means: vec![0.0; n],
            order: (0..n).collect(),
            m,
        };
        for (pos, &arm) in arms.iter().enumerate() {
            st.successes[pos] = sampler.pull(arm, 1)?;
            st.pulls[pos] = 1;
            st.means[pos] = st.successes[pos] as f64;
        }
        Ok(st)
    }

    fn record(&mut self, pos: usize, successes: u64) {
        self.successes[pos] += successes;
        self.pulls[pos] += 1;
        self.means[pos] = self.successes[pos] as f64 / self.pulls[pos] as f64;
    }

    /// Partition positions into the m highest empirical means (ties by
    /// smaller arm index) and the rest, then locate the contenders.
    /// Returns `(h_star, l_star, lcb_h, ucb_l)` as positions and bounds.
    fn contenders(&mut self, log_term: f64) -> (usize, usize, f64, f64) {
        let m = self.m;
        let n = self.arms.len();
        debug_assert!(m >= 1 && m < n);
        let (means, arms, pulls) = (&self.means, self.arms, &self.pulls);
        self.order.sort_unstable_by(|&a, &b| {
            means[b]
                .partial_cmp(&means[a])
                .unwrap()
                .then(arms[a].cmp(&arms[b]))
        });
        let beta = |p: usize| (log_term / (2.0 * pulls[p] as f64)).sqrt();
        let mut h_star = self.order[0];
        let mut lcb = f64::INFINITY;
        for &p in &self.order[..m] {
            let v = means[p] - beta(p);
            if v < lcb || (v == lcb && arms[p] < arms[h_star]) {
                lcb = v;
                h_star = p;
            }
        }
        let mut l_star = self.order[m];
        let mut ucb = f64::NEG_INFINITY;
        for &p in &self.order[m..] {
            let v = means[p] + beta(p);
            if v > ucb || (v == ucb && arms[p] < arms[l_star]) {
                ucb = v;
                l_star = p;
            }
        }
        (h_star, l_star, lcb, ucb)
    }

    fn top_set(&self) -> Vec<usize> {
        self.order[..self.m].iter().map(|&p| self.arms[p]).collect()
    }

    fn estimates(&self) -> BTreeMap<usize, f64> {
        (0..self.arms.len())
            .map(|p| (self.arms[p], self.means[p]))
            .collect()
    }
}

/// LUCB: sample until the top-m/bottom contenders separate at scale
/// `epsilon/2`, then return the m empirical leaders.
///
/// Every returned arm is `(epsilon, m)`-top with probability `1 - delta`.
pub fn lucb<P: ArmPull>(
    sampler: &mut P,
    arms: &[usize],
    m: usize,
    epsilon: f64,
    delta: f64,
) -> Result<CentralOutcome> {
    let n = arms.len();
    if m < 1 || m >= n {
        return Err(Error::InvalidParams(format!(
            "lucb needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "lucb needs epsilon, delta in (0,1), got {epsilon}, {delta}"
        )));
    }
    let mut st = LucbState::init(arms, m, sampler)?;
    let base = (5.0 * n as f64 / (4.0 * delta)).ln();
    let mut t = n as u64;
    loop {
        t += 1;
        assert!(t < 1_000_000_000, "lucb failed to terminate within 1e9 steps");
        let log_term = base + 4.0 * (t as f64).ln();
        let (h_star, l_star, lcb_h, ucb_l) = st.contenders(log_term);
        // Stopping rule checked before every pull pair.
        if ucb_l - lcb_h < epsilon / 2.0 {
            return Ok(CentralOutcome {
                set: st.top_set(),
                estimates: st.estimates(),
                total_pulls: st.pulls.iter().sum(),
            });
        }
        let sh = sampler.pull(arms[h_star], 1)?;
        st.record(h_star, sh);
        let sl = sampler.pull(arms[l_star], 1)?;
        st.record(l_star, sl);
    }
}

/// Fixed-budget LUCB: spend exactly the contract's pull pattern (one pull
/// per arm, then contender pairs) until the budget is exhausted, returning
/// the m empirical leaders and all estimates.
pub fn central_approx_top<P: ArmPull>(
    sampler: &mut P,
    arms: &[usize],
    m: usize,
    budget: u64,
    delta: f64,
) -> Result<CentralOutcome> {
    let n = arms.len();
    if m < 1 || m >= n {
        return Err(Error::InvalidParams(format!(
            "central_approx_top needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    if budget < n as u64 {
        return Err(Error::InsufficientBudget {
            need: n as u64,
            have: budget,
            what: "central_approx_top init pulls".into(),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("delta {delta} outside (0,1)")));
    }
    let mut st = LucbState::init(arms, m, sampler)?;
    let base = (5.0 * n as f64 / (4.0 * delta)).ln();
    let mut t = n as u64;
    while t + 2 <= budget {
        let log_term = base + 4.0 * (t as f64).ln();
        let (h_star, l_star, _, _) = st.contenders(log_term);
        let sh = sampler.pull(arms[h_star], 1)?;
        st.record(h_star, sh);
        let sl = sampler.pull(arms[l_star], 1)?;
        st.record(l_star, sl);
        t += 2;
    }
    // Final ranking refresh.
    let log_term = base + 4.0 * (t.max(1) as f64).ln();
    st.contenders(log_term);
    Ok(CentralOutcome {
        set: st.top_set(),
        estimates: st.estimates(),
        total_pulls: st.pulls.iter().sum(),
    })
}

/// Bottom mirror: run the fixed-budget loop on flipped rewards
/// (`x -> 1 - x`) and report un-flipped estimates.
pub fn central_approx_btm<P: ArmPull>(
    sampler: &mut P,
    arms: &[usize],
    m: usize,
    budget: u64,
    delta: f64,
) -> Result<CentralOutcome> {
    let mut flip = crate::sampling::FlipPull(sampler);
    let out = central_approx_top(&mut flip, arms, m, budget, delta)?;
    Ok(CentralOutcome {
        set: out.set,
        estimates: out
            .estimates
            .into_iter()
            .map(|(arm, v)| (arm, 1.0 - v))
            .collect(),
        total_pulls: out.total_pulls,
    })
}
