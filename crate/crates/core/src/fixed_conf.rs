//! Fixed-confidence elimination in few rounds.
//!
//! Round `r` samples every active arm to accuracy scale `eps_r = 2^-(r+1)`
//! (all agents sweep all survivors), then accepts arms clearly above the
//! residual pivot and rejects arms clearly below it. The pull schedule is
//! chosen so the whole run errs with probability at most `delta`, and the
//! number of rounds is driven by the pivot gap alone.

use std::collections::{BTreeSet, HashMap};

use crate::error::Error;
use crate::model::Sim;
use crate::Result;

/// Per-round trace for diagnostics and property checks.
#[derive(Debug, Clone)]
pub struct FcRound {
    pub eps: f64,
    /// Active set at the start of the round.
    pub active: Vec<usize>,
    /// Residual pivot at the start of the round.
    pub m_res: usize,
    pub accepted: Vec<usize>,
    pub rejected: Vec<usize>,
}

/// Outcome with the elimination history.
#[derive(Debug, Clone)]
pub struct FcOutcome {
    pub set: BTreeSet<usize>,
    pub trace: Vec<FcRound>,
}

// Cumulative per-arm pull schedules beyond this are degenerate-input
// territory (the pivot gap is zero or denormal); bail out before integer
// arithmetic saturates.
const MAX_SCHEDULE: f64 = (1u64 << 60) as f64;

/// Identify the top-m set with confidence `1 - delta`.
///
/// Terminates once every arm is classified, which the schedule guarantees
/// (with probability one for any strict pivot) after roughly
/// `log2(4 / gap)` rounds; the configured round cap guards degenerate
/// inputs.
// The negated float comparisons below are NaN-rejecting guards.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn collab_top_m_fixed_conf(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    delta: f64,
) -> Result<FcOutcome> {
    let n = view.len();
    let k = sim.agents();
    if m < 1 || m >= n {
        return Err(Error::InvalidParams(format!(
            "fixed-confidence needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "confidence delta {delta} outside (0,1)"
        )));
    }
    let cap = sim.consts.fixed_conf_round_cap;
    let mut active: Vec<usize> = view.to_vec();
    let mut accepted: BTreeSet<usize> = BTreeSet::new();
    let mut trace: Vec<FcRound> = Vec::new();
    let mut local: HashMap<usize, (u64, u64)> = view.iter().map(|&a| (a, (0, 0))).collect();
    let mut prev_sched = 0u64;

    let mut r = 0usize;
    while !active.is_empty() {
        if r >= cap {
            return Err(Error::RoundCapExceeded { cap });
        }
        let eps = 2f64.powi(-(r as i32 + 1));
        let sched_f = (8.0 * (4.0 * n as f64 * ((r + 1) * (r + 1)) as f64 / delta).ln()
            / (k as f64 * eps * eps))
            .ceil();
        if !(sched_f < MAX_SCHEDULE) {
            return Err(Error::RoundCapExceeded { cap });
        }
        let sched = sched_f as u64;
        debug_assert!(sched > prev_sched, "schedule must strictly increase");
        let dt = sched - prev_sched;
        prev_sched = sched;

        sim.ledger
            .set_round_budget(Some(active.len() as u64 * dt));
        for agent in 0..k {
            for &arm in &active {
                let s = sim.pull(agent, arm, dt)?;
                let e = local.get_mut(&arm).expect("active arm is tracked");
                e.0 += dt;
                e.1 += s;
            }
        }
        sim.ledger.end_round()?;

        let m_res = m - accepted.len();
        let mean_of = |arm: usize| {
            let (c, s) = local[&arm];
            s as f64 / c as f64
        };
        let mut pi = active.clone();
        pi.sort_unstable_by(|&a, &b| {
            mean_of(b)
                .partial_cmp(&mean_of(a))
                .unwrap()
                .then(a.cmp(&b))
        });
        // Sentinels: rank 0 sits above every mean, rank len+1 below, so a
        // fully resolved residual pivot drains the survivors.
        let at = |pos: usize| -> f64 {
            if pos == 0 {
                2.0
            } else if pos > pi.len() {
                -1.0
            } else {
                mean_of(pi[pos - 1])
            }
        };
        let acc_bar = at(m_res + 1) + eps;
        let rej_bar = at(m_res) - eps;
        let mut acc_round: Vec<usize> = Vec::new();
        let mut rej_round: Vec<usize> = Vec::new();
        for &arm in &active {
            let v = mean_of(arm);
            if v > acc_bar {
                acc_round.push(arm);
            } else if v < rej_bar {
                rej_round.push(arm);
            }
        }
        trace.push(FcRound {
            eps,
            active: active.clone(),
            m_res,
            accepted: acc_round.clone(),
            rejected: rej_round.clone(),
        });
        debug_assert!(acc_round.len() <= m_res, "accepts bounded by pigeonhole");
        accepted.extend(acc_round.iter().copied());
        let gone: BTreeSet<usize> = acc_round
            .into_iter()
            .chain(rej_round)
            .collect();
        active.retain(|a| !gone.contains(a));
        r += 1;
    }
    Ok(FcOutcome {
        set: accepted,
        trace,
    })
}
