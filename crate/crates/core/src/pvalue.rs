//! Conformal p-values.
//!
//! All constructions rank a test score against a set of calibration scores
//! and normalize by the calibration size plus one. Comparisons are exact on
//! the supplied `f64` values: two scores tie only if they are bitwise equal.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::rng::TieBreaker;

/// Calibration scores `V_1..V_n`, stored sorted for rank queries.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    sorted: Vec<f64>,
}

impl CalibrationScores {
    pub fn new(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        for &v in &scores {
            check_finite("calibration score", v)?;
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `(#{V_i < v}, #{V_i = v})`.
    pub fn rank(&self, v: f64) -> (usize, usize) {
        let below = self.sorted.partition_point(|&s| s < v);
        let at_or_below = self.sorted.partition_point(|&s| s <= v);
        (below, at_or_below - below)
    }

    /// Number of tied values among the calibration scores themselves.
    fn internal_ties(&self) -> usize {
        self.sorted.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

fn check_u(u: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&u) {
        Ok(u)
    } else {
        Err(Error::contract(format!("tie-breaking uniform must be in [0,1], got {u}")))
    }
}

#[inline]
fn randomized(calib: &CalibrationScores, v: f64, u: f64) -> f64 {
    let (below, ties) = calib.rank(v);
    (below as f64 + u * (1.0 + ties as f64)) / (calib.len() as f64 + 1.0)
}

/// `(#{V_i < v_hat} + u * (1 + #{V_i = v_hat})) / (n + 1)`.
pub fn randomized_pvalue(calib: &CalibrationScores, v_hat: f64, u: f64) -> Result<f64> {
    let u = check_u(u)?;
    let v_hat = check_finite("v_hat", v_hat)?;
    Ok(randomized(calib, v_hat, u))
}

/// `(1 + #{V_i < v_hat}) / (n + 1)`, valid without ties.
pub fn deterministic_pvalue(calib: &CalibrationScores, v_hat: f64) -> f64 {
    let (below, _) = calib.rank(v_hat);
    (1.0 + below as f64) / (calib.len() as f64 + 1.0)
}

/// The randomized formula applied to the unobservable score
/// `V(X_{n+j}, Y_{n+j})`. Only available in simulation.
pub fn oracle_pvalue(calib: &CalibrationScores, v_true: f64, u: f64) -> Result<f64> {
    randomized_pvalue(calib, v_true, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Randomized,
    Deterministic,
    SameClass,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub p: Vec<f64>,
    pub method: PValueMethod,
    pub seed: Option<u64>,
}

impl PValueVector {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

fn checked_scores(field: &str, scores: &[f64]) -> Result<()> {
    for &v in scores {
        check_finite(field, v)?;
    }
    Ok(())
}

/// Randomized p-values for a batch of test scores with per-unit uniforms
/// from `tie_breaker`.
pub fn randomized_pvalues(calib: &CalibrationScores, v_hat: &[f64], tie_breaker: TieBreaker) -> Result<PValueVector> {
    checked_scores("v_hat", v_hat)?;
    let p = v_hat
        .iter()
        .enumerate()
        .map(|(j, &v)| randomized(calib, v, tie_breaker.u(j)))
        .collect();
    Ok(PValueVector {
        p,
        method: PValueMethod::Randomized,
        seed: Some(tie_breaker.seed()),
    })
}

/// Oracle p-values from true-outcome scores, sharing uniforms with
/// [`randomized_pvalues`] under the same breaker.
pub fn oracle_pvalues(calib: &CalibrationScores, v_true: &[f64], tie_breaker: TieBreaker) -> Result<PValueVector> {
    let mut out = randomized_pvalues(calib, v_true, tie_breaker)?;
    out.method = PValueMethod::Oracle;
    Ok(out)
}

/// Deterministic p-values for a batch, with the number of ties found in
/// the pooled calibration and test scores. The FDR guarantee for this
/// construction assumes that count is zero.
pub fn deterministic_pvalues(calib: &CalibrationScores, v_hat: &[f64]) -> Result<(PValueVector, usize)> {
    checked_scores("v_hat", v_hat)?;
    let p = v_hat.iter().map(|&v| deterministic_pvalue(calib, v)).collect();
    Ok((
        PValueVector {
            p,
            method: PValueMethod::Deterministic,
            seed: None,
        },
        pooled_ties(calib, v_hat),
    ))
}

/// `(n + m) - #distinct` over the pooled calibration and test scores.
pub fn pooled_ties(calib: &CalibrationScores, v_hat: &[f64]) -> usize {
    let mut test = v_hat.to_vec();
    test.sort_by(f64::total_cmp);
    let test_internal = test.windows(2).filter(|w| w[0] == w[1]).count();
    let mut cross = 0;
    let mut prev: Option<f64> = None;
    for &v in &test {
        if prev == Some(v) {
            continue;
        }
        prev = Some(v);
        if calib.rank(v).1 > 0 {
            cross += 1;
        }
    }
    calib.internal_ties() + test_internal + cross
}

/// Same-class p-values: test scores ranked against the null-class
/// calibration scores `V(X_i, c_i)` for calibration units with `Y_i <= c_i`,
/// normalized by `n0 + 1`.
pub fn same_class_pvalues(class0_scores: &[f64], test_scores: &[f64], u: &[f64]) -> Result<PValueVector> {
    if class0_scores.is_empty() {
        return Err(Error::EmptyNullClass);
    }
    if u.len() != test_scores.len() {
        return Err(Error::contract(format!(
            "{} uniforms supplied for {} test scores",
            u.len(),
            test_scores.len()
        )));
    }
    checked_scores("test score", test_scores)?;
    let calib = CalibrationScores::new(class0_scores.to_vec())?;
    let p = test_scores
        .iter()
        .zip(u)
        .map(|(&v, &u)| Ok(randomized(&calib, v, check_u(u)?)))
        .collect::<Result<_>>()?;
    Ok(PValueVector {
        p,
        method: PValueMethod::SameClass,
        seed: None,
    })
}
