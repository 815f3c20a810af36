//! Randomized property suites over the complexity calculus and the
//! generated instance families. Library functions so both the test suites
//! and the CLI `verify-props` subcommand can run them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::gen::{check_block_sandwich, check_hard_complexity, gen_hard};
use crate::instance::Instance;
use crate::sampling::gen_stream;

/// Outcome of one property suite.
#[derive(Debug, Clone)]
pub struct PropReport {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    pub first_failure: Option<String>,
}

impl PropReport {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n_max: usize) -> Instance {
    let n = rng.random_range(4..=n_max.max(4));
    let means: Vec<f64> = (0..n)
        .map(|_| 0.01 + 0.98 * rng.random::<f64>())
        .collect();
    Instance::new(means).expect("random means are valid")
}

fn record(report: &mut PropReport, ok: bool, detail: impl FnOnce() -> String) {
    if !ok {
        report.violations += 1;
        if report.first_failure.is_none() {
            report.first_failure = Some(detail());
        }
    }
}

/// Sub-instance sandwich: for compatible pivots `j` (global) and `k`
/// (within a subset `V`), the subset complexity at `k` is bounded by the
/// sum of global inverse squared gaps over `V`, which is bounded by the
/// global complexity at `j`; same with truncation.
pub fn lemma_sandwich_suite(cases: usize, seed: u64) -> PropReport {
    let mut rng = gen_stream(seed ^ 0x5157);
    let mut report = PropReport {
        name: "subset-sandwich",
        cases: 0,
        violations: 0,
        first_failure: None,
    };
    while report.cases < cases {
        let inst = random_instance(&mut rng, 12);
        let n = inst.len();
        let view: Vec<usize> = (0..n).filter(|_| rng.random::<bool>()).collect();
        if view.len() < 2 {
            continue;
        }
        let eps = 0.01 + 0.98 * rng.random::<f64>();
        let full = inst.full_view();
        let mut any_pair = false;
        for j in 1..n {
            for k in 1..view.len() {
                let ok_order = inst.theta_rank_in(&view, k) >= inst.theta_rank_in(&full, j)
                    && inst.theta_rank_in(&full, j) >= inst.theta_rank_in(&full, j + 1)
                    && inst.theta_rank_in(&full, j + 1) >= inst.theta_rank_in(&view, k + 1);
                if !ok_order {
                    continue;
                }
                let (Ok(h_sub), Ok(h_glob)) =
                    (inst.complexity_h_in(&view, k), inst.complexity_h(j))
                else {
                    continue;
                };
                any_pair = true;
                let mid: f64 = view
                    .iter()
                    .map(|&i| inst.gap(i, j).unwrap().powi(-2))
                    .sum();
                let tol = 1e-9 * h_glob.max(1.0);
                record(&mut report, h_sub <= mid + tol && mid <= h_glob + tol, || {
                    format!("plain: {h_sub} <= {mid} <= {h_glob} failed (j={j}, k={k})")
                });
                let h_sub_e = inst.complexity_h_trunc_in(&view, k, eps).unwrap();
                let h_glob_e = inst.complexity_h_trunc(j, eps).unwrap();
                let mid_e: f64 = view
                    .iter()
                    .map(|&i| inst.gap(i, j).unwrap().max(eps).powi(-2))
                    .sum();
                record(
                    &mut report,
                    h_sub_e <= mid_e + tol && mid_e <= h_glob_e + tol,
                    || format!("truncated: {h_sub_e} <= {mid_e} <= {h_glob_e} failed"),
                );
            }
        }
        if any_pair {
            report.cases += 1;
        }
    }
    report
}

/// Pivot-shift bound: truncating at the rank-t gap keeps the complexity
/// within a factor 4 of the pivot-m complexity, for every t.
pub fn lemma_pivot_shift_suite(cases: usize, seed: u64) -> PropReport {
    let mut rng = gen_stream(seed ^ 0xA11CE);
    let mut report = PropReport {
        name: "pivot-shift",
        cases: 0,
        violations: 0,
        first_failure: None,
    };
    while report.cases < cases {
        let inst = random_instance(&mut rng, 12);
        let n = inst.len();
        let m = rng.random_range(1..n);
        let Ok(h_m) = inst.complexity_h(m) else { continue };
        let full = inst.full_view();
        for t in 1..n {
            let ranked_t = inst.ranked()[t - 1];
            let gap_t = inst.gap(ranked_t, m).unwrap();
            let h_t = inst.complexity_h_trunc_in(&full, t, gap_t).unwrap();
            record(
                &mut report,
                h_t <= 4.0 * h_m * (1.0 + 1e-12),
                || format!("t={t}, m={m}: {h_t} > 4 * {h_m}"),
            );
        }
        report.cases += 1;
    }
    report
}

/// Far-arm bound: an arm `z` ranks away from the pivot contributes at most
/// `H/z` through its inverse squared gap.
pub fn lemma_far_arm_suite(cases: usize, seed: u64) -> PropReport {
    let mut rng = gen_stream(seed ^ 0xFA12);
    let mut report = PropReport {
        name: "far-arm",
        cases: 0,
        violations: 0,
        first_failure: None,
    };
    while report.cases < cases {
        let inst = random_instance(&mut rng, 12);
        let n = inst.len();
        let m = rng.random_range(1..n);
        let Ok(h_m) = inst.complexity_h(m) else { continue };
        for t in 1..=n {
            for z in 1..=n {
                if !(t + z <= m || t >= m + z) {
                    continue;
                }
                let ranked_t = inst.ranked()[t - 1];
                let gap_t = inst.gap(ranked_t, m).unwrap();
                record(
                    &mut report,
                    gap_t.powi(-2) <= h_m / z as f64 * (1.0 + 1e-12),
                    || format!("t={t}, z={z}, m={m}: {} > {}", gap_t.powi(-2), h_m / z as f64),
                );
            }
        }
        report.cases += 1;
    }
    report
}

/// Hard-family suite: valid base-family instances over a parameter grid
/// pass the complexity interval and the block sandwich; desk-scale
/// recursive parameter sets are rejected by validation.
pub fn hard_family_suite(seed: u64, n_max: usize) -> PropReport {
    let mut report = PropReport {
        name: "hard-family",
        cases: 0,
        violations: 0,
        first_failure: None,
    };
    let ns = [5usize, 101, 1001, 10_001, 99_999];
    let cs = [0.05, 0.1, 0.2, 0.24];
    let mus = [0.4, 0.5, 0.6];
    for (i, &n) in ns.iter().filter(|&&n| n <= n_max).enumerate() {
        for (j, &c) in cs.iter().enumerate() {
            for (l, &mu) in mus.iter().enumerate() {
                let mut rng = gen_stream(seed + (i * 100 + j * 10 + l) as u64);
                // K = 8 keeps every grid point in the base family.
                match gen_hard(c, mu, n, 8, &mut rng) {
                    Ok((inst, ann)) => {
                        report.cases += 1;
                        record(
                            &mut report,
                            check_hard_complexity(&inst, &ann).is_ok(),
                            || format!("complexity interval at n={n}, C={c}, mu={mu}"),
                        );
                        record(
                            &mut report,
                            check_block_sandwich(inst.means(), &ann).is_ok(),
                            || format!("block sandwich at n={n}, C={c}, mu={mu}"),
                        );
                    }
                    Err(e) => {
                        report.cases += 1;
                        record(&mut report, false, || {
                            format!("base-family generation failed at n={n}, C={c}, mu={mu}: {e}")
                        });
                    }
                }
            }
        }
    }
    // Recursive desk-scale attempts must be rejected, not mis-generated.
    for &(n, k) in &[(2001usize, 2usize), (99_999, 2), (65_535, 3)] {
        let mut rng = gen_stream(seed ^ n as u64);
        report.cases += 1;
        record(
            &mut report,
            gen_hard(0.1, 0.5, n, k, &mut rng).is_err(),
            || format!("recursive desk-scale n={n}, K={k} was not rejected"),
        );
    }
    report
}
