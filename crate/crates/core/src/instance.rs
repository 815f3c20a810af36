//! Ground-truth instances and the instance-complexity calculus.
//!
//! An [`Instance`] is an ordered list of Bernoulli means on (0,1). All
//! order statistics rank by mean descending with ties broken by smaller
//! index; the pivot position itself must be strict (otherwise the
//! complexity is infinite and [`Error::DegeneratePivot`] is returned).
//!
//! Every quantity is also available on a *view* (a subset of arm indices),
//! which is how sub-instances are handled throughout: arms keep their
//! original ids, and ranking happens inside the view.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// A set of Bernoulli arms identified by dense indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    means: Vec<f64>,
    /// Arm ids sorted by mean descending, ties by index ascending.
    ranked: Vec<usize>,
}

/// On-disk form: `{"means": [...], "m": int}` with deterministic field order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub means: Vec<f64>,
    pub m: usize,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<(Instance, usize)> {
        Ok((Instance::new(self.means)?, self.m))
    }
}

/// Rank arm ids of `view` by mean descending, ties by smaller index.
fn rank_view(means: &[f64], view: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = view.to_vec();
    v.sort_by(|&a, &b| {
        means[b]
            .partial_cmp(&means[a])
            .expect("means are finite")
            .then(a.cmp(&b))
    });
    v
}

impl Instance {
    /// Build an instance, validating that every mean lies strictly in (0,1)
    /// and that there are at least two arms.
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least 2 arms, got {}",
                means.len()
            )));
        }
        for (i, &t) in means.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) || !t.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "mean of arm {i} is {t}, must lie strictly in (0,1)"
                )));
            }
        }
        let ranked = rank_view(&means, &(0..means.len()).collect::<Vec<_>>());
        Ok(Instance { means, ranked })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires n >= 2
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Arm ids of the full instance ranked by mean descending.
    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    /// The full-instance view `0..n`.
    pub fn full_view(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// `theta_[j]` (1-based) within `view`.
    pub fn theta_rank_in(&self, view: &[usize], j: usize) -> f64 {
        debug_assert!(j >= 1 && j <= view.len());
        let ranked = rank_view(&self.means, view);
        self.means[ranked[j - 1]]
    }

    /// Validate `1 <= m <= |view|-1` and strictness of the pivot, returning
    /// `(theta_[m], theta_[m+1])` of the view.
    pub fn pivot_in(&self, view: &[usize], m: usize) -> Result<(f64, f64)> {
        let n = view.len();
        if m < 1 || m > n.saturating_sub(1) {
            return Err(Error::InvalidParams(format!(
                "pivot m={m} out of range for {n} arms"
            )));
        }
        let ranked = rank_view(&self.means, view);
        let hi = self.means[ranked[m - 1]];
        let lo = self.means[ranked[m]];
        if hi <= lo {
            return Err(Error::DegeneratePivot { m, value: hi });
        }
        Ok((hi, lo))
    }

    /// Gap of arm `i` with respect to pivot `m` inside `view`:
    /// distance to the far side of the pivot boundary.
    pub fn gap_in(&self, view: &[usize], i: usize, m: usize) -> Result<f64> {
        let (hi, lo) = self.pivot_in(view, m)?;
        let t = self.means[i];
        debug_assert!(view.contains(&i));
        if t >= hi {
            Ok(t - lo)
        } else {
            // theta_[m] and theta_[m+1] are adjacent order statistics, so
            // t < hi implies t <= lo here.
            debug_assert!(t <= lo);
            Ok(hi - t)
        }
    }

    pub fn gap(&self, i: usize, m: usize) -> Result<f64> {
        self.gap_in(&self.full_view(), i, m)
    }

    /// Instance complexity `H^<m>(view) = sum gap^-2`.
    pub fn complexity_h_in(&self, view: &[usize], m: usize) -> Result<f64> {
        let (hi, lo) = self.pivot_in(view, m)?;
        let mut h = 0.0;
        for &i in view {
            let t = self.means[i];
            let gap = if t >= hi { t - lo } else { hi - t };
            h += gap.powi(-2);
        }
        Ok(h)
    }

    pub fn complexity_h(&self, m: usize) -> Result<f64> {
        self.complexity_h_in(&self.full_view(), m)
    }

    /// Truncated complexity `sum max(gap, eps)^-2`. Any positive `eps` is
    /// accepted; `eps >= 1` truncates every gap since means lie in (0,1).
    // The negated comparison is a NaN-rejecting guard.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn complexity_h_trunc_in(&self, view: &[usize], m: usize, eps: f64) -> Result<f64> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParams(format!(
                "truncation eps={eps} must be positive and finite"
            )));
        }
        let (hi, lo) = self.pivot_in(view, m)?;
        let mut h = 0.0;
        for &i in view {
            let t = self.means[i];
            let gap = if t >= hi { t - lo } else { hi - t };
            h += gap.max(eps).powi(-2);
        }
        Ok(h)
    }

    pub fn complexity_h_trunc(&self, m: usize, eps: f64) -> Result<f64> {
        self.complexity_h_trunc_in(&self.full_view(), m, eps)
    }

    /// Selection complexity `sum_{i != [m]} (theta_i - theta_[m])^-2`.
    /// Requires the m-th mean to be unique among its neighbors.
    pub fn complexity_h_bar_in(&self, view: &[usize], m: usize) -> Result<f64> {
        let n = view.len();
        if m < 1 || m > n {
            return Err(Error::InvalidParams(format!(
                "selection pivot m={m} out of range for {n} arms"
            )));
        }
        let ranked = rank_view(&self.means, view);
        let pivot_arm = ranked[m - 1];
        let tm = self.means[pivot_arm];
        if m >= 2 && self.means[ranked[m - 2]] <= tm {
            return Err(Error::DegeneratePivot { m, value: tm });
        }
        if m < n && self.means[ranked[m]] >= tm {
            return Err(Error::DegeneratePivot { m, value: tm });
        }
        let mut h = 0.0;
        for &i in view {
            if i != pivot_arm {
                h += (self.means[i] - tm).powi(-2);
            }
        }
        Ok(h)
    }

    pub fn complexity_h_bar(&self, m: usize) -> Result<f64> {
        self.complexity_h_bar_in(&self.full_view(), m)
    }

    /// Exact top-m set from the hidden means. Test oracle and report scoring
    /// only; algorithms never call this.
    pub fn true_top_m_in(&self, view: &[usize], m: usize) -> Result<BTreeSet<usize>> {
        self.pivot_in(view, m)?;
        let ranked = rank_view(&self.means, view);
        Ok(ranked[..m].iter().copied().collect())
    }

    pub fn true_top_m(&self, m: usize) -> Result<BTreeSet<usize>> {
        self.true_top_m_in(&self.full_view(), m)
    }

    /// The arm of rank `m` (1-based) in `view` — the selection target.
    pub fn mth_arm_in(&self, view: &[usize], m: usize) -> Result<usize> {
        self.complexity_h_bar_in(view, m)?; // validates uniqueness
        let ranked = rank_view(&self.means, view);
        Ok(ranked[m - 1])
    }

    /// Is arm `i` within `eps` of the j-th best mean of `view`?
    pub fn is_eps_top(&self, view: &[usize], i: usize, eps: f64, j: usize) -> Result<bool> {
        if j < 1 || j > view.len() {
            return Err(Error::InvalidParams(format!(
                "rank j={j} out of range for view of {}",
                view.len()
            )));
        }
        if !view.contains(&i) {
            return Err(Error::InvalidParams(format!("arm {i} not in view")));
        }
        Ok(self.means[i] >= self.theta_rank_in(view, j) - eps)
    }

    /// Mirror of [`Instance::is_eps_top`]: within `eps` of the j-th worst.
    pub fn is_eps_bottom(&self, view: &[usize], i: usize, eps: f64, j: usize) -> Result<bool> {
        if j < 1 || j > view.len() {
            return Err(Error::InvalidParams(format!(
                "rank j={j} out of range for view of {}",
                view.len()
            )));
        }
        if !view.contains(&i) {
            return Err(Error::InvalidParams(format!("arm {i} not in view")));
        }
        Ok(self.means[i] <= self.theta_rank_in(view, view.len() + 1 - j) + eps)
    }

    /// An instance with every mean flipped to `1 - theta`.
    pub fn flipped(&self) -> Instance {
        Instance::new(self.means.iter().map(|t| 1.0 - t).collect())
            .expect("flip of a valid instance is valid")
    }

    pub fn to_file(&self, m: usize) -> InstanceFile {
        InstanceFile {
            means: self.means.clone(),
            m,
        }
    }
}

/// A computed complexity summary for one `(instance, pivot)` pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub m: usize,
    pub gaps: Vec<f64>,
    pub h: f64,
    /// `(eps, H_eps)` when a truncation level was requested.
    pub h_eps: Option<(f64, f64)>,
    /// Selection complexity when the m-th mean is unique.
    pub h_bar: Option<f64>,
}

impl ComplexityReport {
    /// Build and cross-check: all gaps positive, `h` equal to the sum of
    /// inverse squared gaps to 1e-12 relative, `h_eps <= h`.
    pub fn build(inst: &Instance, m: usize, eps: Option<f64>) -> Result<Self> {
        let view = inst.full_view();
        let gaps: Vec<f64> = view
            .iter()
            .map(|&i| inst.gap(i, m))
            .collect::<Result<_>>()?;
        if gaps.iter().any(|&g| g <= 0.0) {
            return Err(Error::InvalidInstance(
                "nonpositive gap in complexity report".into(),
            ));
        }
        let h = inst.complexity_h(m)?;
        let check: f64 = gaps.iter().map(|g| g.powi(-2)).sum();
        if (h - check).abs() > 1e-12 * h.abs().max(1.0) {
            return Err(Error::InvalidInstance(format!(
                "complexity mismatch: {h} vs {check}"
            )));
        }
        let h_eps = match eps {
            Some(e) => {
                let he = inst.complexity_h_trunc(m, e)?;
                if he > h * (1.0 + 1e-12) {
                    return Err(Error::InvalidInstance(format!(
                        "truncated complexity {he} exceeds {h}"
                    )));
                }
                Some((e, he))
            }
            None => None,
        };
        let h_bar = inst.complexity_h_bar(m).ok();
        Ok(ComplexityReport {
            m,
            gaps,
            h,
            h_eps,
            h_bar,
        })
    }
}
