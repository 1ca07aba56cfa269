//! Benjamini–Hochberg step-up selection.

use serde::{Deserialize, Serialize};

use crate::error::{check_level, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected unit indices, ascending.
    pub selected: Vec<usize>,
    pub k_star: usize,
    /// `q * k_star / m`, or 0 for an empty selection.
    pub tau_hat: f64,
    pub q: f64,
}

/// Rejection level `q * k / m` at step `k`. Every threshold in this module
/// goes through this expression so the step-up scan and the supremum form
/// compare identical floats.
#[inline]
pub(crate) fn step_level(q: f64, k: usize, m: usize) -> f64 {
    q * k as f64 / m as f64
}

fn check_pvalues(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(j) => Err(Error::contract(format!("p-value {j} is {} (must lie in [0,1])", p[j]))),
        None => Ok(()),
    }
}

fn sorted(p: &[f64]) -> Vec<f64> {
    let mut s = p.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Largest `k` with `#{p_j <= q k / m} >= k`, or 0.
fn k_star(sorted_p: &[f64], q: f64) -> usize {
    let m = sorted_p.len();
    (1..=m).rev().find(|&k| sorted_p[k - 1] <= step_level(q, k, m)).unwrap_or(0)
}

/// Run BH at level `q`.
///
/// `k*` comes from one sort and a scan of the order statistics
/// (`p_(k) <= q k / m` iff at least `k` p-values clear that level).
pub fn bh_select(p: &[f64], q: f64) -> Result<SelectionResult> {
    let q = check_level(q)?;
    check_pvalues(p)?;
    let m = p.len();
    let k = k_star(&sorted(p), q);
    let tau_hat = if k == 0 { 0.0 } else { step_level(q, k, m) };
    let selected = if k == 0 {
        Vec::new()
    } else {
        (0..m).filter(|&j| p[j] <= tau_hat).collect()
    };
    debug_assert_eq!(selected.len(), k);
    Ok(SelectionResult {
        selected,
        k_star: k,
        tau_hat,
        q,
    })
}

/// BH rejection threshold `q * k* / m` (0 when nothing is selected).
pub fn bh_threshold(p: &[f64], q: f64) -> Result<f64> {
    Ok(bh_select(p, q)?.tau_hat)
}

/// `sup { t in [0, 1] : t * N <= q * #{v_i <= t} }` over an empirical sample.
///
/// The count is a right-continuous step function, so the supremum is found
/// by walking the distinct sample values: on `[b_d, b_{d+1})` the count is
/// constant `C_d` and the feasible part is `[b_d, q C_d / N]` when
/// non-empty. `t = 0` is always admitted.
pub fn sup_threshold(values: &[f64], q: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let s = sorted(values);
    let mut best = 0.0_f64;
    let mut i = 0;
    while i < n {
        let b = s[i];
        let mut j = i;
        while j < n && s[j] == b {
            j += 1;
        }
        // j = #{v <= b}
        let level = step_level(q, j, n);
        if b <= level {
            let next = if j < n { s[j] } else { 1.0 };
            best = best.max(level.min(next).min(1.0));
        }
        i = j;
    }
    best
}

/// BH threshold in its supremum form `sup { t : m t / #{p_j <= t} <= q }`.
/// Selects the same set as [`bh_select`].
pub fn storey_threshold(p: &[f64], q: f64) -> Result<f64> {
    let q = check_level(q)?;
    check_pvalues(p)?;
    Ok(sup_threshold(p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// `#false selections / max(1, |R|)`
    pub fdp: f64,
    /// `#true selections / max(1, #true)`
    pub power: f64,
    pub n_selected: usize,
}

/// FDP and power of `selected` against `truth[j] = 1{Y_j > c_j}`.
pub fn metrics(selected: &[usize], truth: &[bool]) -> Result<ErrorMetrics> {
    if let Some(&j) = selected.iter().find(|&&j| j >= truth.len()) {
        return Err(Error::contract(format!(
            "selected index {j} out of range for {} truth labels",
            truth.len()
        )));
    }
    let true_sel = selected.iter().filter(|&&j| truth[j]).count();
    let false_sel = selected.len() - true_sel;
    let n_true = truth.iter().filter(|&&t| t).count();
    Ok(ErrorMetrics {
        fdp: false_sel as f64 / selected.len().max(1) as f64,
        power: true_sel as f64 / n_true.max(1) as f64,
        n_selected: selected.len(),
    })
}
