//! The fixed-time pipeline: candidate-certificate producers and the
//! verification that turns them into amplifiable answers.
//!
//! - [`collab_top_m_simple`]: phased successive accepts/rejects; every agent
//!   sweeps the surviving arms each phase, eliminations go by empirical gap.
//! - [`collab_top_m`]: random-partition recursion; each agent accepts a
//!   conservative slice of the top and prunes a slice of the bottom per
//!   round, delegating to the phased eliminator once the instance is small.
//! - [`verify_top_m`]: one fully parallel round that checks a candidate
//!   `(S, estimates)` pair and refuses when the budget cannot certify it.
//! - [`collab_top_m_general`]: guess-and-verify amplification — geometric
//!   budget guesses, co-scheduled repetition copies, plurality/median
//!   aggregation, keep the largest verified guess.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use crate::central::{central_approx_btm, central_approx_top};
use crate::constants::k_pow_10;
use crate::error::Error;
use crate::model::Sim;
use crate::Result;

/// A candidate answer: the claimed top-m set and an estimated mean for
/// every arm of the instance it was produced on.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub set: BTreeSet<usize>,
    pub estimates: BTreeMap<usize, f64>,
}

/// Path metadata from one recursive-solver run.
#[derive(Debug, Clone, Copy, Default)]
pub struct CollabMeta {
    /// Both branch guards failed while the instance was still large, forcing
    /// delegation to the phased eliminator.
    pub stalled: bool,
    /// Recursion levels executed (each one exchange).
    pub recursion_rounds: usize,
    /// Accept branch fired at least once / reject branch fired at least once.
    pub accept_fired: bool,
    pub reject_fired: bool,
}

/// Outcome of the guess-and-verify amplifier.
#[derive(Debug, Clone)]
pub struct GeneralOutcome {
    pub set: BTreeSet<usize>,
    /// No guess verified: the answer is the arbitrary-fallback set.
    pub fallback: bool,
}

fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 1);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

/// The phased-elimination schedule: cumulative per-arm per-agent pulls
/// `T_r` and survivor counts `n_r`, geometric in the phase index.
#[derive(Debug, Clone, PartialEq)]
pub struct SarSchedule {
    pub phases: usize,
    /// `T_0..T_{phases+1}`; phase `r` pulls each survivor `T_{r+1} - T_r`
    /// more times per agent.
    pub cumulative_pulls: Vec<u64>,
    /// `n_0..n_{phases+1}`; phase `r` eliminates down to `n_{r+1}` arms.
    pub survivors: Vec<usize>,
}

impl SarSchedule {
    /// Build and validate: survivor counts strictly decrease to zero, every
    /// populated phase gets a positive pull increment, and the total charged
    /// time `sum n_r T_{r+1}` stays within the horizon exactly in integers.
    pub fn build(n: usize, horizon: u64, phases: usize) -> Result<SarSchedule> {
        let phases = phases.max(1);
        let r = phases as f64;
        let nf = n as f64;
        let cumulative_pulls: Vec<u64> = (0..=phases + 1)
            .map(|ph| {
                if ph == 0 {
                    0
                } else {
                    (nf.powf(ph as f64 / r) * horizon as f64
                        / (nf.powf(1.0 + 1.0 / r) * (r + 1.0)))
                    .floor() as u64
                }
            })
            .collect();
        let survivors: Vec<usize> = (0..=phases + 1)
            .map(|ph| (nf / nf.powf(ph as f64 / r)).floor() as usize)
            .collect();
        for ph in 0..=phases {
            if survivors[ph] > 0 && cumulative_pulls[ph + 1] <= cumulative_pulls[ph] {
                return Err(Error::InsufficientBudget {
                    need: (nf.powf(1.0 + 1.0 / r) * (r + 1.0)).ceil() as u64,
                    have: horizon,
                    what: format!("phase {ph} of the elimination schedule floors to zero"),
                });
            }
            // The floored survivor counts can plateau near the tail
            // (zero-elimination phases); they never increase.
            debug_assert!(survivors[ph + 1] <= survivors[ph]);
        }
        let charged: u64 = (0..=phases)
            .map(|ph| survivors[ph] as u64 * cumulative_pulls[ph + 1])
            .sum();
        assert!(
            charged <= horizon,
            "elimination schedule overruns its horizon: {charged} > {horizon}"
        );
        debug_assert_eq!(*survivors.last().unwrap(), 0);
        Ok(SarSchedule {
            phases,
            cumulative_pulls,
            survivors,
        })
    }
}

/// Phased successive accepts/rejects.
///
/// Runs `phases + 1` rounds. In phase `r` every agent pulls every surviving
/// arm `T_{r+1} - T_r` times; the arms with the largest empirical gaps are
/// eliminated, and an eliminated arm is accepted iff it ranks within the
/// residual pivot. Returns the accepted set plus the estimate recorded for
/// each arm when it was eliminated.
pub fn collab_top_m_simple(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
    phases: usize,
) -> Result<Certificate> {
    let n = view.len();
    let k = sim.agents();
    if n == 0 || m > n {
        return Err(Error::InvalidParams(format!(
            "phased eliminator needs 0 <= m <= n, got m={m}, n={n}"
        )));
    }
    let sched = SarSchedule::build(n, horizon, phases)?;
    let phases = sched.phases;
    let (t_sched, n_sched) = (&sched.cumulative_pulls, &sched.survivors);

    let mut active: Vec<usize> = view.to_vec();
    let mut accepted: BTreeSet<usize> = BTreeSet::new();
    let mut estimates: BTreeMap<usize, f64> = BTreeMap::new();
    // This run's own statistics (exchanged at each round boundary).
    let mut local: HashMap<usize, (u64, u64)> = view.iter().map(|&a| (a, (0, 0))).collect();

    for ph in 0..=phases {
        debug_assert_eq!(active.len(), n_sched[ph]);
        let dt = t_sched[ph + 1] - t_sched[ph];
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
        // Rank survivors: mean descending, ties by smaller index.
        let mut sigma = active.clone();
        sigma.sort_unstable_by(|&a, &b| {
            let (ca, sa) = local[&a];
            let (cb, sb) = local[&b];
            let ma = sa as f64 / ca as f64;
            let mb = sb as f64 / cb as f64;
            mb.partial_cmp(&ma).unwrap().then(a.cmp(&b))
        });
        let mean_of = |arm: usize| {
            let (c, s) = local[&arm];
            s as f64 / c as f64
        };
        // theta-hat at rank position, with sentinels outside the range:
        // rank 0 is above every mean, rank len+1 below every mean.
        let at = |pos: usize| -> f64 {
            if pos == 0 {
                2.0
            } else if pos > sigma.len() {
                -1.0
            } else {
                mean_of(sigma[pos - 1])
            }
        };
        let rank_of: HashMap<usize, usize> =
            sigma.iter().enumerate().map(|(i, &a)| (a, i + 1)).collect();
        let elim_count = n_sched[ph] - n_sched[ph + 1];
        let mut by_gap: Vec<(f64, usize)> = active
            .iter()
            .map(|&arm| {
                let gap = if rank_of[&arm] <= m_res {
                    mean_of(arm) - at(m_res + 1)
                } else {
                    at(m_res) - mean_of(arm)
                };
                (gap, arm)
            })
            .collect();
        by_gap.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let eliminated: Vec<usize> = by_gap[..elim_count].iter().map(|&(_, a)| a).collect();
        for &arm in &eliminated {
            estimates.insert(arm, mean_of(arm));
            if rank_of[&arm] <= m_res {
                accepted.insert(arm);
            }
        }
        let kill: BTreeSet<usize> = eliminated.into_iter().collect();
        active.retain(|a| !kill.contains(a));
    }
    debug_assert!(active.is_empty());
    Ok(Certificate {
        set: accepted,
        estimates,
    })
}

/// Per-level parameters of the recursive solver: the partition slack `q`,
/// the per-agent accept/reject slice sizes, and the sub-call budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    /// Partition slack `4 K sqrt(n ln(n R))`.
    pub q: f64,
    /// Arms each agent tries to accept; `slice * K + q <= m` when positive.
    pub top_slice: usize,
    /// Arms each agent tries to prune; `slice * K + q <= n - m` when positive.
    pub btm_slice: usize,
    /// Budget of each centralized sub-call: a quarter round's share.
    pub sub_budget: u64,
    /// Failure share of each sub-call: `1/(100 R) / (2K)`.
    pub sub_delta: f64,
}

impl RunParams {
    pub fn derive(n: usize, m: usize, k: usize, r_bound: usize, horizon: u64) -> RunParams {
        let q = 4.0 * k as f64 * (n as f64 * (n as f64 * r_bound as f64).ln()).sqrt();
        let slice = |count: usize| {
            if count as f64 > q {
                ((count as f64 - q) / k as f64).floor() as usize
            } else {
                0
            }
        };
        let top_slice = slice(m);
        let btm_slice = slice(n - m);
        debug_assert!(top_slice == 0 || top_slice as f64 * k as f64 + q <= m as f64);
        debug_assert!(btm_slice == 0 || btm_slice as f64 * k as f64 + q <= (n - m) as f64);
        RunParams {
            q,
            top_slice,
            btm_slice,
            sub_budget: horizon / (4 * r_bound as u64),
            sub_delta: 1.0 / (100.0 * r_bound as f64) / (2.0 * k as f64),
        }
    }
}

/// Random-partition recursive solver.
///
/// While the instance is large, arms are assigned to agents independently
/// and uniformly; each agent accepts an approximate top slice and prunes an
/// approximate bottom slice of its share, one exchange per level. Small
/// instances delegate to [`collab_top_m_simple`] with half the horizon.
pub fn collab_top_m(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
) -> Result<(Certificate, CollabMeta)> {
    let k = sim.agents();
    let n0 = view.len();
    if n0 == 0 || m > n0 {
        return Err(Error::InvalidParams(format!(
            "recursive solver needs 0 <= m <= n, got m={m}, n={n0}"
        )));
    }
    // Cheapest conceivable need; lets dead repetition copies fail for free
    // (before any randomness is consumed).
    if horizon < n0 as u64 {
        return Err(Error::InsufficientBudget {
            need: n0 as u64,
            have: horizon,
            what: "recursive solver entry".into(),
        });
    }
    let r_bound = sim.consts.round_bound(n0, k);
    let threshold = k_pow_10(k);

    let mut active: Vec<usize> = view.to_vec();
    let mut cur_m = m;
    let mut accepted: BTreeSet<usize> = BTreeSet::new();
    let mut estimates: BTreeMap<usize, f64> = BTreeMap::new();
    let mut meta = CollabMeta::default();

    loop {
        let n = active.len();
        cur_m = cur_m.min(n);
        if cur_m == 0 || cur_m == n {
            if cur_m == n {
                accepted.extend(active.iter().copied());
            }
            // Arms resolved without their own elimination round keep their
            // last exchanged estimate if any.
            for &arm in &active {
                let est = sim.ledger.merged_stat(arm).map(|s| s.mean).unwrap_or(0.5);
                estimates.entry(arm).or_insert(est);
            }
            break;
        }
        let delegate = (n as u64) <= threshold;
        let mut stall = false;
        if !delegate {
            if meta.recursion_rounds >= r_bound {
                return Err(Error::RoundCapExceeded { cap: r_bound });
            }
            let params = RunParams::derive(n, cur_m, k, r_bound, horizon);
            let sub_budget = params.sub_budget;
            let sub_delta = params.sub_delta;
            let (top_slice, btm_slice) = (params.top_slice, params.btm_slice);

            // Assign each arm to an agent independently and uniformly.
            let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
            for &arm in &active {
                let a = sim.coins().random_range(0..k);
                parts[a].push(arm);
            }

            let mut acc_round: BTreeSet<usize> = BTreeSet::new();
            let mut rej_round: BTreeSet<usize> = BTreeSet::new();
            if top_slice == 0 && btm_slice == 0 {
                stall = true;
            } else {
                sim.ledger.set_round_budget(Some(2 * sub_budget));
                if top_slice >= 1 {
                    meta.accept_fired = true;
                    for (agent, part) in parts.iter().enumerate() {
                        if part.is_empty() {
                            continue;
                        }
                        if part.len() <= top_slice {
                            // Degenerate share: the whole part is the slice.
                            for &arm in part {
                                acc_round.insert(arm);
                                let est =
                                    sim.ledger.merged_stat(arm).map(|s| s.mean).unwrap_or(0.5);
                                estimates.insert(arm, est);
                            }
                            continue;
                        }
                        let out = central_approx_top(
                            &mut sim.agent(agent),
                            part,
                            top_slice,
                            sub_budget,
                            sub_delta,
                        )?;
                        for arm in out.set {
                            acc_round.insert(arm);
                            estimates.insert(arm, out.estimates[&arm]);
                        }
                    }
                }
                if btm_slice >= 1 {
                    meta.reject_fired = true;
                    for (agent, part) in parts.iter().enumerate() {
                        if part.is_empty() {
                            continue;
                        }
                        if part.len() <= btm_slice {
                            for &arm in part {
                                if !acc_round.contains(&arm) {
                                    rej_round.insert(arm);
                                    let est =
                                        sim.ledger.merged_stat(arm).map(|s| s.mean).unwrap_or(0.5);
                                    estimates.insert(arm, est);
                                }
                            }
                            continue;
                        }
                        let out = central_approx_btm(
                            &mut sim.agent(agent),
                            part,
                            btm_slice,
                            sub_budget,
                            sub_delta,
                        )?;
                        for arm in out.set {
                            if !acc_round.contains(&arm) {
                                rej_round.insert(arm);
                                estimates.insert(arm, out.estimates[&arm]);
                            }
                        }
                    }
                }
                sim.ledger.end_round()?;
                meta.recursion_rounds += 1;
                debug_assert!(acc_round.len() <= cur_m);
                cur_m -= acc_round.len();
                accepted.extend(acc_round.iter().copied());
                active.retain(|a| !acc_round.contains(a) && !rej_round.contains(a));
                continue;
            }
        }
        // Endgame (small instance, or both guards failed on a large one).
        meta.stalled = stall;
        let phases = ceil_log2(active.len().max(2));
        let cert = collab_top_m_simple(sim, &active, cur_m, horizon / 2, phases)?;
        accepted.extend(cert.set);
        estimates.extend(cert.estimates);
        break;
    }
    Ok((
        Certificate {
            set: accepted,
            estimates,
        },
        meta,
    ))
}

/// Verify a candidate `(S, estimates)` pair in one fully parallel round.
///
/// Derives a gap for every arm from the estimates, refuses (`None`) if the
/// pair is malformed, a gap is nonpositive, or the pull bill does not fit
/// the horizon; otherwise pulls each arm proportionally to its inverse
/// squared gap (split round-robin over agents) and accepts only if the
/// re-estimated means separate `S` from its complement with quarter-gap
/// margins.
#[allow(clippy::too_many_arguments)] // mirrors the operation's own parameter list
pub fn verify_top_m(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    candidate: &BTreeSet<usize>,
    estimates: &BTreeMap<usize, f64>,
    gamma: f64,
    horizon: u64,
) -> Result<Option<BTreeSet<usize>>> {
    let k = sim.agents();
    let n = view.len();
    if candidate.len() != m || m == 0 || m >= n {
        return Ok(None);
    }
    if !candidate.iter().all(|a| view.contains(a)) {
        return Ok(None);
    }
    if view.iter().any(|a| !estimates.contains_key(a)) {
        return Ok(None);
    }
    let floor_est = |arms: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        arms.map(|a| estimates[&a]).fold(None, |acc, v| {
            Some(acc.map_or(v, |m: f64| if v < m { v } else { m }))
        })
    };
    let in_set = |a: &usize| candidate.contains(a);
    let low_in = floor_est(&mut candidate.iter().copied()).expect("m >= 1");
    let high_out = view
        .iter()
        .copied()
        .filter(|a| !in_set(a))
        .map(|a| estimates[&a])
        .fold(f64::NEG_INFINITY, f64::max);

    let mut pull_plan: Vec<(usize, u64)> = Vec::with_capacity(n);
    let mut gaps: BTreeMap<usize, f64> = BTreeMap::new();
    for &arm in view {
        let g = if in_set(&arm) {
            estimates[&arm] - high_out
        } else {
            low_in - estimates[&arm]
        };
        if g <= 0.0 {
            return Ok(None);
        }
        gaps.insert(arm, g);
        let need = (64.0 * gamma / (g * g)).ceil();
        if !need.is_finite() || need > u64::MAX as f64 {
            return Ok(None);
        }
        pull_plan.push((arm, need as u64));
    }
    // Per-agent bill with round-robin splitting; remainder pulls go to the
    // low-index agents, so agent 0 carries the maximum load.
    let max_load: u128 = pull_plan
        .iter()
        .map(|&(_, p)| (p as u128).div_ceil(k as u128))
        .sum();
    if max_load > horizon as u128 {
        return Ok(None);
    }

    sim.ledger.set_round_budget(Some(max_load as u64));
    let mut observed: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for &(arm, p) in &pull_plan {
        let base = p / k as u64;
        let rem = (p % k as u64) as usize;
        let mut c = 0;
        let mut s = 0;
        for agent in 0..k {
            let count = base + u64::from(agent < rem);
            if count > 0 {
                s += sim.pull(agent, arm, count)?;
                c += count;
            }
        }
        observed.insert(arm, (c, s));
    }
    sim.ledger.end_round()?;

    let mean_of = |arm: usize| {
        let (c, s) = observed[&arm];
        s as f64 / c as f64
    };
    let min_in = candidate
        .iter()
        .map(|&a| mean_of(a) - gaps[&a] / 4.0)
        .fold(f64::INFINITY, f64::min);
    let max_out = view
        .iter()
        .copied()
        .filter(|a| !in_set(a))
        .map(|a| mean_of(a) + gaps[&a] / 4.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if min_in > max_out {
        Ok(Some(candidate.clone()))
    } else {
        Ok(None)
    }
}

/// Plurality set and per-arm lower-median estimates over a batch of
/// certificates.
pub(crate) fn plurality_and_medians(
    view: &[usize],
    certs: &[&Certificate],
) -> Option<(BTreeSet<usize>, BTreeMap<usize, f64>)> {
    if certs.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<&BTreeSet<usize>, usize> = BTreeMap::new();
    for c in certs {
        *counts.entry(&c.set).or_insert(0) += 1;
    }
    // Highest count; ties go to the lexicographically smallest set, which is
    // the earliest key in BTreeMap order.
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(s, _)| (*s).clone())?;
    let mut medians = BTreeMap::new();
    for &arm in view {
        let mut vals: Vec<f64> = certs.iter().filter_map(|c| c.estimates.get(&arm)).copied().collect();
        if vals.is_empty() {
            medians.insert(arm, 0.5);
            continue;
        }
        vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        medians.insert(arm, vals[(vals.len() - 1) / 2]);
    }
    Some((best, medians))
}

/// Guess-and-verify amplification.
///
/// Stage `s` runs `4^s` co-scheduled copies of the recursive solver with a
/// geometrically shrinking per-copy budget, aggregates them by plurality
/// set and median estimates, and verifies the aggregate with exponent
/// `4^s`. The largest verified stage wins; with no verified stage the
/// answer is an arbitrary (flagged) m-set.
pub fn collab_top_m_general(
    sim: &mut Sim<'_>,
    view: &[usize],
    m: usize,
    horizon: u64,
) -> Result<GeneralOutcome> {
    let n = view.len();
    if m < 1 || m >= n {
        return Err(Error::InvalidParams(format!(
            "guess-and-verify needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let r_bound = sim.consts.round_bound(n, sim.agents());

    // Stage table: per-copy budgets until they floor to zero.
    let mut stages: Vec<(u32, u64, u64)> = Vec::new(); // (s, copies, copy_budget)
    for s in 1..32u32 {
        let denom = pi2 * (s as f64) * (s as f64) * 4f64.powi(s as i32);
        let copy_budget = (3.0 * horizon as f64 / denom).floor();
        if copy_budget < 1.0 {
            break;
        }
        stages.push((s, 1u64 << (2 * s), copy_budget as u64));
    }
    if stages.is_empty() {
        let set: BTreeSet<usize> = view.iter().copied().take(m).collect();
        return Ok(GeneralOutcome {
            set,
            fallback: true,
        });
    }

    // Run every copy of every stage; all of them are co-scheduled.
    let mut copy_certs: Vec<Vec<Certificate>> = vec![Vec::new(); stages.len()];
    let mut children = Vec::new();
    for (idx, &(_, copies, copy_budget)) in stages.iter().enumerate() {
        // Copies that cannot even initialize fail before consuming any
        // randomness or time; skip them wholesale.
        if copy_budget < n as u64 {
            continue;
        }
        let copies = copies.min(sim.consts.general_copy_cap);
        for _ in 0..copies {
            let (res, ledger) = sim.child_run(copy_budget, r_bound + 2, |child| {
                collab_top_m(child, view, m, copy_budget)
            });
            children.push(ledger);
            if let Ok((cert, _)) = res {
                copy_certs[idx].push(cert);
            }
        }
    }
    sim.ledger.absorb_parallel(&children)?;

    // One verification battery, also co-scheduled.
    let mut verify_children = Vec::new();
    let mut verified: Vec<(u32, BTreeSet<usize>)> = Vec::new();
    for (idx, &(s, _, _)) in stages.iter().enumerate() {
        let refs: Vec<&Certificate> = copy_certs[idx].iter().collect();
        let Some((set, medians)) = plurality_and_medians(view, &refs) else {
            continue;
        };
        let verify_budget = (3.0 * horizon as f64 / (pi2 * (s as f64) * (s as f64))).floor() as u64;
        let gamma = 4f64.powi(s as i32);
        let (res, ledger) = sim.child_run(verify_budget, 2, |child| {
            verify_top_m(child, view, m, &set, &medians, gamma, verify_budget)
        });
        verify_children.push(ledger);
        if let Ok(Some(ans)) = res {
            verified.push((s, ans));
        }
    }
    sim.ledger.absorb_parallel(&verify_children)?;

    match verified.into_iter().max_by_key(|&(s, _)| s) {
        Some((_, set)) => Ok(GeneralOutcome {
            set,
            fallback: false,
        }),
        None => Ok(GeneralOutcome {
            set: view.iter().copied().take(m).collect(),
            fallback: true,
        }),
    }
}
