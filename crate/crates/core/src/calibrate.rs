//! Empirical calibration of the best-arm budget thresholds.
//!
//! The `f`/`g` budget functions carry "universal constants"; this harness
//! measures where the verified best-arm search actually flips between
//! refusing and succeeding, and reports the implied constants so the
//! defaults can be sanity-checked or overridden.

use std::collections::BTreeSet;

use crate::constants::Constants;
use crate::instance::Instance;
use crate::model::{CollabConfig, LedgerMode, Sim};
use crate::reduction::best_arm_verified;
use crate::sampling::{agent_streams, coin_stream};
use crate::Result;

/// Where the success/refusal rates cross 0.9, and the constants implied by
/// solving the `f`/`g` forms for those budgets.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub k: usize,
    pub trials: u64,
    /// Smallest probed budget with success rate >= 0.9.
    pub eta_success: u64,
    /// Largest probed budget with refusal rate >= 0.9.
    pub eta_refuse: u64,
    pub implied_c_f: f64,
    pub implied_c_g: f64,
}

fn success_rate(
    inst: &Instance,
    consts: &Constants,
    k: usize,
    delta: f64,
    eta: u64,
    trials: u64,
    want_best: bool,
) -> Result<f64> {
    let best: BTreeSet<usize> = inst.true_top_m(1)?;
    let best = *best.iter().next().unwrap();
    let view = inst.full_view();
    let mut hits = 0u64;
    for trial in 0..trials {
        let mut streams = agent_streams(0xCA11B, trial.wrapping_mul(7919) ^ eta, k);
        let mut coins = coin_stream(0xCA11B, trial.wrapping_mul(7919) ^ eta);
        let mut sim = Sim::new(
            inst,
            consts,
            &mut streams,
            &mut coins,
            CollabConfig::new(k, eta.max(1), 64)?,
            LedgerMode::Summary,
        );
        let out = best_arm_verified(&mut sim, &view, delta, eta)?;
        let hit = if want_best {
            out == Some(best)
        } else {
            out.is_none()
        };
        if hit {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Probe a geometric budget ladder for the success and refusal thresholds
/// of the verified best-arm search on `inst`.
pub fn calibrate_best_arm(
    inst: &Instance,
    consts: &Constants,
    k: usize,
    delta: f64,
    trials: u64,
) -> Result<CalibrationReport> {
    let h1 = inst.complexity_h(1)?;
    let n = inst.len();
    let mut eta_success = u64::MAX;
    let mut eta_refuse = 0u64;
    let mut eta = 2u64;
    // Geometric sweep; the ladder spans refusal through comfortable success.
    for _ in 0..40 {
        let succ = success_rate(inst, consts, k, delta, eta, trials, true)?;
        let refuse = success_rate(inst, consts, k, delta, eta, trials, false)?;
        if refuse >= 0.9 {
            eta_refuse = eta_refuse.max(eta);
        }
        if succ >= 0.9 && eta < eta_success {
            eta_success = eta;
        }
        if succ >= 0.98 {
            break;
        }
        eta = eta.saturating_mul(2);
    }
    let log_n = (n as f64 / delta).ln();
    let l = ((eta_success.max(1) as f64) * k as f64).ln().max(1.0);
    let implied_c_f = eta_success as f64 / ((h1 / k as f64) * l * l * l * log_n);
    let implied_c_g = eta_refuse as f64 / ((h1 / k as f64) * log_n);
    Ok(CalibrationReport {
        k,
        trials,
        eta_success,
        eta_refuse,
        implied_c_f,
        implied_c_g,
    })
}
