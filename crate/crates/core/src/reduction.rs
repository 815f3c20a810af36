//! Reduce `n` arms to `O(m)` candidates by repeated uniform subsampling
//! with perturbed budgets, then solve on the survivors.
//!
//! The best-arm engine here is a collaborative successive-halving stand-in:
//! each round every agent sweeps the survivors with an even budget split and
//! the top empirical half advances. It does not reproduce any particular
//! round-speedup exponent, but combined with certificate verification it
//! satisfies the qualitative contract the pipeline needs: it never returns
//! a confident wrong arm, succeeds under generous budgets, and refuses
//! under starved ones (thresholds set by the `f`/`g` budget functions).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::constants::Constants;
use crate::error::Error;
use crate::fixed_time::{collab_top_m_general, verify_top_m, Certificate};
use crate::model::Sim;
use crate::Result;

fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 1);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// Success-threshold budget `f(V, delta, eta)`:
/// `C_f * (H1(V)/K) * ln^3(eta K) * ln(|V|/delta)`.
pub fn budget_f(consts: &Constants, h1: f64, k: usize, v_len: usize, delta: f64, eta: f64) -> f64 {
    let l = (eta.max(1.0) * k as f64).ln().max(0.0);
    consts.c_f * (h1 / k as f64) * l * l * l * (v_len as f64 / delta).ln()
}

/// `f` with its self-reference resolved by one fixed-point iteration from
/// `eta_0 = horizon`.
pub fn budget_f_fixed(
    consts: &Constants,
    h1: f64,
    k: usize,
    v_len: usize,
    delta: f64,
    horizon: u64,
) -> f64 {
    budget_f(consts, h1, k, v_len, delta, horizon as f64)
}

/// Refusal-threshold budget `g(V, delta) = C_g * (H1(V)/K) * ln(|V|/delta)`.
pub fn budget_g(consts: &Constants, h1: f64, k: usize, v_len: usize, delta: f64) -> f64 {
    consts.c_g * (h1 / k as f64) * (v_len as f64 / delta).ln()
}

/// Perturbation ratio `beta = (C_f/C_g) * ln^3(T K)`, clamped above 1 so the
/// perturbed budget `T/beta` stays meaningful for degenerate tiny horizons.
pub fn beta_ratio(consts: &Constants, horizon: u64, k: usize) -> f64 {
    let l = ((horizon.max(1) as f64) * k as f64).ln().max(0.0);
    ((consts.c_f / consts.c_g) * l * l * l).max(1.0 + 1e-9)
}

/// Collaborative successive halving over `view` in `rounds` rounds.
///
/// Per round every agent pulls every survivor `floor((T/rounds)/|S|)` times;
/// the top half by merged mean survives. Returns the final leader with the
/// estimates every arm had when it was dropped (pivot-1 certificate shape).
/// With `flip` set the halving runs on rewards `1 - x`, i.e. it returns the
/// worst arm; estimates are reported un-flipped.
pub fn best_arm_collab(
    sim: &mut Sim<'_>,
    view: &[usize],
    horizon: u64,
    rounds: usize,
    flip: bool,
) -> Result<Certificate> {
    if view.is_empty() {
        return Err(Error::InvalidParams("best-arm over an empty view".into()));
    }
    let k = sim.agents();
    let rounds = rounds.max(1);
    if view.len() == 1 {
        // Zero pulls allowed: a singleton is its own best arm.
        let arm = view[0];
        let est = sim.ledger.merged_stat(arm).map(|s| s.mean).unwrap_or(0.5);
        return Ok(Certificate {
            set: BTreeSet::from([arm]),
            estimates: BTreeMap::from([(arm, est)]),
        });
    }
    let per_round = horizon / rounds as u64;
    let mut survivors: Vec<usize> = view.to_vec();
    let mut local: HashMap<usize, (u64, u64)> = view.iter().map(|&a| (a, (0, 0))).collect();
    let mut estimates: BTreeMap<usize, f64> = BTreeMap::new();
    let raw_mean = |local: &HashMap<usize, (u64, u64)>, arm: usize| {
        let (c, s) = local[&arm];
        s as f64 / c as f64
    };
    let report_mean = |local: &HashMap<usize, (u64, u64)>, arm: usize| {
        let m = raw_mean(local, arm);
        if flip {
            1.0 - m
        } else {
            m
        }
    };
    for _round in 0..rounds {
        let per_arm = per_round / survivors.len() as u64;
        if per_arm == 0 {
            return Err(Error::InsufficientBudget {
                need: survivors.len() as u64 * rounds as u64,
                have: horizon,
                what: "successive-halving round allocation".into(),
            });
        }
        sim.ledger
            .set_round_budget(Some(per_arm * survivors.len() as u64));
        for agent in 0..k {
            for &arm in &survivors {
                let s = if flip {
                    sim.pull_flipped(agent, arm, per_arm)?
                } else {
                    sim.pull(agent, arm, per_arm)?
                };
                let e = local.get_mut(&arm).expect("survivor is tracked");
                e.0 += per_arm;
                e.1 += s;
            }
        }
        sim.ledger.end_round()?;
        survivors.sort_unstable_by(|&a, &b| {
            raw_mean(&local, b)
                .partial_cmp(&raw_mean(&local, a))
                .unwrap()
                .then(a.cmp(&b))
        });
        let keep = survivors.len().div_ceil(2);
        for &arm in &survivors[keep..] {
            estimates.insert(arm, report_mean(&local, arm));
        }
        survivors.truncate(keep);
    }
    for &arm in &survivors {
        estimates.insert(arm, report_mean(&local, arm));
    }
    Ok(Certificate {
        set: BTreeSet::from([survivors[0]]),
        estimates,
    })
}

/// Halving plus verification: returns the best arm of `view` or refuses.
///
/// Contract (with thresholds [`budget_f_fixed`] and [`budget_g`]): a
/// non-best non-refusal answer has probability at most `delta`; budgets
/// above `f` succeed and budgets below `g` refuse, each with probability
/// at least `1 - delta`.
pub fn best_arm_verified(
    sim: &mut Sim<'_>,
    view: &[usize],
    delta: f64,
    horizon: u64,
) -> Result<Option<usize>> {
    if view.is_empty() {
        return Ok(None);
    }
    if view.len() == 1 {
        return Ok(Some(view[0]));
    }
    let rounds = ceil_log2(sim.agents()).max(1);
    let half = horizon / 2;
    let cert = match best_arm_collab(sim, view, half, rounds, false) {
        Ok(c) => c,
        Err(Error::InsufficientBudget { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let gamma = (view.len() as f64 / delta).ln();
    let verdict = verify_top_m(sim, view, 1, &cert.set, &cert.estimates, gamma, half)?;
    Ok(verdict.map(|s| *s.iter().next().expect("singleton")))
}

/// One subsample draw: kept arms, budget coin, and the answer.
#[derive(Debug, Clone)]
pub struct SubsetOutcome {
    pub arm: Option<usize>,
    /// The budget coin chose the full horizon rather than `T/beta`.
    pub tau_full: bool,
    pub subset_size: usize,
}

/// Subsample each arm with probability `1/m`, perturb the budget, and run
/// the verified best-arm search on the subsample.
pub fn subset_best_arm(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    delta: f64,
    horizon: u64,
) -> Result<SubsetOutcome> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParams(format!(
            "subset-best-arm needs delta in (0, 1/2), got {delta}"
        )));
    }
    if m < 1 || m > view.len() {
        return Err(Error::InvalidParams(format!(
            "subset-best-arm pivot m={m} out of range for {}",
            view.len()
        )));
    }
    let p = 1.0 / m as f64;
    let mut subset: Vec<usize> = Vec::new();
    for &arm in view {
        if sim.coins().random::<f64>() < p {
            subset.push(arm);
        }
    }
    let beta = beta_ratio(sim.consts, horizon, sim.agents());
    let tau_full = sim.coins().random::<f64>() < 0.5;
    let tau = if tau_full {
        horizon
    } else {
        (horizon as f64 / beta).floor() as u64
    };
    if subset.is_empty() {
        // An empty subsample refuses immediately, consuming nothing.
        return Ok(SubsetOutcome {
            arm: None,
            tau_full,
            subset_size: 0,
        });
    }
    let arm = best_arm_verified(sim, &subset, delta, tau)?;
    Ok(SubsetOutcome {
        arm,
        tau_full,
        subset_size: subset.len(),
    })
}

/// Candidate superset from repeated subsampling, or a refusal.
///
/// Runs up to `z = ceil(25 m 4^gamma / delta^2)` co-scheduled copies of
/// [`subset_best_arm`] at budget `horizon / z` each (the executed count is
/// capped by `Constants::z_cap`; frequencies use the executed count).
/// Refuses when the m-th largest output frequency is below `3/(4em)`;
/// otherwise returns every arm with frequency at least `1/(16em)`.
pub fn reduction(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    delta: f64,
    gamma: u32,
    horizon: u64,
) -> Result<Option<BTreeSet<usize>>> {
    if !(delta > 0.0 && delta < 1.0 / 24.0) {
        return Err(Error::InvalidParams(format!(
            "reduction needs delta in (0, 1/24), got {delta}"
        )));
    }
    let z_nominal = (25.0 * m as f64 * 4f64.powi(gamma as i32) / (delta * delta)).ceil();
    let z_nominal = if z_nominal > u64::MAX as f64 {
        u64::MAX
    } else {
        (z_nominal as u64).max(1)
    };
    let per_copy = horizon / z_nominal;
    let z_run = z_nominal.min(sim.consts.z_cap);
    let copy_cap = ceil_log2(sim.agents()) + 3;

    let mut counts: HashMap<usize, u64> = HashMap::new();
    let mut children = Vec::with_capacity(z_run as usize);
    for _ in 0..z_run {
        let (res, ledger) = sim.child_run(per_copy.max(1), copy_cap, |child| {
            subset_best_arm(child, view, m, delta, per_copy)
        });
        children.push(ledger);
        if let Some(arm) = res?.arm {
            *counts.entry(arm).or_insert(0) += 1;
        }
    }
    sim.ledger.absorb_parallel(&children)?;

    let e = std::f64::consts::E;
    let mut freq_desc: Vec<f64> = view
        .iter()
        .map(|a| *counts.get(a).unwrap_or(&0) as f64 / z_run as f64)
        .collect();
    freq_desc.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mth = freq_desc.get(m - 1).copied().unwrap_or(0.0);
    if mth < 3.0 / (4.0 * e * m as f64) {
        return Ok(None);
    }
    let keep = 1.0 / (16.0 * e * m as f64);
    let out: BTreeSet<usize> = view
        .iter()
        .copied()
        .filter(|a| *counts.get(a).unwrap_or(&0) as f64 / z_run as f64 >= keep)
        .collect();
    Ok(Some(out))
}

/// Superset (or fallback) over geometric confidence stages.
#[derive(Debug, Clone)]
pub struct ReductionOutcome {
    pub set: BTreeSet<usize>,
    pub fallback: bool,
}

/// Stage `s` runs [`reduction`] at confidence exponent `s` and budget
/// `6T/(pi^2 s^2)`; stages stop when the nominal per-copy budget floors to
/// zero. The largest non-refusing stage wins.
pub fn reduction_general(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
) -> Result<ReductionOutcome> {
    let delta = 1.0 / 25.0;
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let mut stage_budgets: Vec<(u32, u64)> = Vec::new();
    for s in 1..60u32 {
        let budget = (6.0 * horizon as f64 / (pi2 * (s as f64) * (s as f64))).floor() as u64;
        let z = 25.0 * m as f64 * 4f64.powi(s as i32) / (delta * delta);
        if (budget as f64 / z).floor() < 1.0 {
            break;
        }
        stage_budgets.push((s, budget));
    }
    let mut children = Vec::new();
    let mut results: Vec<(u32, Option<BTreeSet<usize>>)> = Vec::new();
    for &(s, budget) in &stage_budgets {
        let cap = ceil_log2(sim.agents()) + 3;
        let (res, ledger) = sim.child_run(budget, cap, |child| {
            reduction(child, view, m, delta, s, budget)
        });
        children.push(ledger);
        results.push((s, res?));
    }
    sim.ledger.absorb_parallel(&children)?;
    let best = results.into_iter().rev().find_map(|(_, r)| r);
    match best {
        Some(set) => Ok(ReductionOutcome {
            set,
            fallback: false,
        }),
        None => Ok(ReductionOutcome {
            set: view.iter().copied().take(m).collect(),
            fallback: true,
        }),
    }
}

/// Reduce to `O(m)` candidates with half the budget, then identify with the
/// guess-and-verify solver on the other half.
pub fn collab_top_m_improved(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
) -> Result<ReductionOutcome> {
    let rounds_before = sim.ledger.rounds_used();
    let reduced = reduction_general(sim, view, m, horizon / 2)?;
    let rounds_reduce = sim.ledger.rounds_used() - rounds_before;
    let candidates: Vec<usize> = reduced.set.iter().copied().collect();
    if candidates.len() <= m {
        // The reduction under-delivered; nothing left to separate.
        let mut set = reduced.set.clone();
        let mut fallback = reduced.fallback || candidates.len() < m;
        for &arm in view {
            if set.len() >= m {
                break;
            }
            fallback = true;
            set.insert(arm);
        }
        return Ok(ReductionOutcome { set, fallback });
    }
    let out = collab_top_m_general(sim, &candidates, m, horizon / 2)?;
    let rounds_total = sim.ledger.rounds_used() - rounds_before;
    // Phase additivity of the round accounting.
    assert!(rounds_total >= rounds_reduce);
    Ok(ReductionOutcome {
        set: out.set,
        fallback: reduced.fallback || out.fallback,
    })
}

/// Selection outcome: the arm claimed to hold the m-th largest mean.
#[derive(Debug, Clone)]
pub struct SelectOutcome {
    pub arm: usize,
    pub fallback: bool,
}

/// Find the arm with the m-th largest mean: identify the top-m set with
/// half the budget, then run reward-flipped halving inside it to surface
/// its worst member.
pub fn select_mth_arm(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
) -> Result<SelectOutcome> {
    if m < 1 || m > view.len() {
        return Err(Error::InvalidParams(format!(
            "selection pivot m={m} out of range for {}",
            view.len()
        )));
    }
    let top = if m == view.len() {
        ReductionOutcome {
            set: view.iter().copied().collect(),
            fallback: false,
        }
    } else {
        collab_top_m_improved(sim, view, m, horizon / 2)?
    };
    let members: Vec<usize> = top.set.iter().copied().collect();
    let rounds = ceil_log2(sim.agents()).max(1);
    let cert = best_arm_collab(sim, &members, horizon / 2, rounds, true)?;
    let arm = *cert.set.iter().next().expect("singleton winner");
    Ok(SelectOutcome {
        arm,
        fallback: top.fallback,
    })
}
