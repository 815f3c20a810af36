//! Shared helpers for the integration suites: an independent brute-force
//! oracle for the complexity calculus (kept deliberately separate from the
//! library implementation) and common Monte-Carlo utilities.

use std::collections::BTreeSet;

use topm::gen::{gen_random, ClusterSpec};
use topm::sampling::gen_stream;
use topm::Instance;

/// Rank arm ids by mean descending, ties by smaller index. Computed from
/// scratch with a stable sort over (value, index) pairs.
pub fn oracle_rank(means: &[f64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = means.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    pairs.into_iter().map(|(_, i)| i).collect()
}

/// Two-case gap formula evaluated directly on sorted copies; `None` when
/// the pivot is not strict.
pub fn oracle_gap(means: &[f64], i: usize, m: usize) -> Option<f64> {
    let rank = oracle_rank(means);
    let hi = means[rank[m - 1]];
    let lo = means[rank[m]];
    if hi <= lo {
        return None;
    }
    Some(if means[i] >= hi {
        means[i] - lo
    } else {
        hi - means[i]
    })
}

pub fn oracle_h(means: &[f64], m: usize) -> Option<f64> {
    (0..means.len())
        .map(|i| oracle_gap(means, i, m).map(|g| g.powi(-2)))
        .sum()
}

pub fn oracle_h_trunc(means: &[f64], m: usize, eps: f64) -> Option<f64> {
    (0..means.len())
        .map(|i| oracle_gap(means, i, m).map(|g| g.max(eps).powi(-2)))
        .sum()
}

/// Selection complexity; `None` unless the m-th mean is strictly between
/// its rank neighbors.
pub fn oracle_h_bar(means: &[f64], m: usize) -> Option<f64> {
    let rank = oracle_rank(means);
    let n = means.len();
    let pivot = rank[m - 1];
    let tm = means[pivot];
    if m >= 2 && means[rank[m - 2]] <= tm {
        return None;
    }
    if m < n && means[rank[m]] >= tm {
        return None;
    }
    Some(
        (0..n)
            .filter(|&i| i != pivot)
            .map(|i| (means[i] - tm).powi(-2))
            .sum(),
    )
}

pub fn oracle_top(means: &[f64], m: usize) -> Option<BTreeSet<usize>> {
    let rank = oracle_rank(means);
    if means[rank[m - 1]] <= means[rank[m]] {
        return None;
    }
    Some(rank[..m].iter().copied().collect())
}

/// Relative agreement at the stated tolerance.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// The fixed-time acceptance instance: 64 arms, pivot 8, pivot gap at
/// least 0.1, drawn once from a pinned seed.
pub fn suite_instance_64() -> Instance {
    let mut rng = gen_stream(20260810);
    gen_random(64, 8, 0.1, &ClusterSpec::default(), &mut rng).expect("suite instance")
}

/// Monte-Carlo slack for comparing an empirical rate against a bound `p`:
/// three binomial sigmas plus a small-count guard.
pub fn mc_slack(p: f64, trials: u64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    3.0 * (p * (1.0 - p) / trials as f64).sqrt() + 3.0 / trials as f64
}
