//! Monotone nonconformity scores.
//!
//! A score `V(x, y)` is computed from an externally supplied prediction
//! `mu_hat = μ̂(x)`, an outcome value `y`, and (for the clipped kinds) the
//! unit's threshold `c`. Every built-in rule is non-decreasing in `y` for a
//! fixed prediction, which is the only property the FDR guarantee needs.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_finite, Result};

/// Clip constant used when none is given.
pub const DEFAULT_CLIP_M: f64 = 100.0;

/// Residual score `y - mu_hat`.
pub fn residual_score(mu_hat: f64, y: f64) -> Result<f64> {
    let mu_hat = check_finite("mu_hat", mu_hat)?;
    let y = check_finite("y", y)?;
    Ok(y - mu_hat)
}

/// Clipped score `M * 1{y > c} - mu_hat`.
///
/// With `c = 0` and binary `y` this is `M * y - mu_hat`. Positive-class
/// scores sit above every null-class score once `M >= 2 * sup |mu_hat|`.
pub fn clipped_score(mu_hat: f64, y: f64, c: f64, m: f64) -> Result<f64> {
    let mu_hat = check_finite("mu_hat", mu_hat)?;
    let y = check_finite("y", y)?;
    let c = check_finite("c", c)?;
    let m = check_finite("M", m)?;
    Ok(clipped(mu_hat, y, c, m))
}

#[inline]
fn clipped(mu_hat: f64, y: f64, c: f64, m: f64) -> f64 {
    if y > c {
        m - mu_hat
    } else {
        -mu_hat
    }
}

/// `M * 1{y >= c} + c * 1{y < c}`, the threshold-only clipped form.
///
/// This form ignores the prediction entirely, so every test unit gets the
/// same score `M` when evaluated at its own threshold. It is kept for
/// comparison; [`ScoreRule::Clipped`] is the usable variant.
#[inline]
fn clipped_threshold(y: f64, c: f64, m: f64) -> f64 {
    if y >= c {
        m
    } else {
        c
    }
}

type ScoreFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// User-supplied score `(mu_hat, y, c) -> V`. The caller is responsible for
/// monotonicity in `y`; [`check_monotone`] can probe it.
#[derive(Clone)]
pub struct CustomScore {
    name: String,
    f: Arc<ScoreFn>,
}

impl CustomScore {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomScore").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum ScoreRule {
    /// `y - mu_hat`
    Residual,
    /// `M * 1{y > c} - mu_hat`
    Clipped {
        m: f64,
    },
    /// `M * 1{y >= c} + c * 1{y < c}`
    ClippedThreshold {
        m: f64,
    },
    Custom(CustomScore),
}

impl ScoreRule {
    pub fn clipped(m: f64) -> Result<Self> {
        Self::check_m(m)?;
        Ok(ScoreRule::Clipped { m })
    }

    pub fn clipped_threshold(m: f64) -> Result<Self> {
        Self::check_m(m)?;
        Ok(ScoreRule::ClippedThreshold { m })
    }

    fn check_m(m: f64) -> Result<()> {
        check_finite("M", m)?;
        if m <= 0.0 {
            return Err(crate::Error::Invalid(format!("clip constant M must be positive, got {m}")));
        }
        Ok(())
    }

    /// Evaluate `V(x, y)` for a unit with prediction `mu_hat` and threshold `c`.
    /// Inputs are assumed finite.
    pub fn eval(&self, mu_hat: f64, y: f64, c: f64) -> f64 {
        match self {
            ScoreRule::Residual => y - mu_hat,
            ScoreRule::Clipped { m } => clipped(mu_hat, y, c, *m),
            ScoreRule::ClippedThreshold { m } => clipped_threshold(y, c, *m),
            ScoreRule::Custom(custom) => (custom.f)(mu_hat, y, c),
        }
    }

    /// Whether evaluation depends on the unit threshold `c`.
    pub fn uses_threshold(&self) -> bool {
        !matches!(self, ScoreRule::Residual)
    }

    pub fn clip_constant(&self) -> Option<f64> {
        match self {
            ScoreRule::Clipped { m } | ScoreRule::ClippedThreshold { m } => Some(*m),
            _ => None,
        }
    }

    /// Warning text when `M < 2 * max |mu_hat|` over `predictions`.
    pub fn clip_warning(&self, predictions: &[f64]) -> Option<String> {
        let m = match self {
            ScoreRule::Clipped { m } => *m,
            _ => return None,
        };
        let sup = predictions.iter().fold(0.0_f64, |acc, p| acc.max(p.abs()));
        (m < 2.0 * sup).then(|| {
            format!(
                "clip constant M={m} is below 2*max|mu_hat|={}; class separation is not guaranteed",
                2.0 * sup
            )
        })
    }
}

impl fmt::Display for ScoreRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreRule::Residual => write!(f, "res"),
            ScoreRule::Clipped { m } => write!(f, "clip(M={m})"),
            ScoreRule::ClippedThreshold { m } => write!(f, "clip-threshold(M={m})"),
            ScoreRule::Custom(c) => write!(f, "custom({})", c.name),
        }
    }
}

/// One monotonicity probe: the rule is evaluated at `y_low` and `y_high`
/// for the same prediction and threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneProbe {
    pub mu_hat: f64,
    pub y_low: f64,
    pub y_high: f64,
    pub c: f64,
}

impl MonotoneProbe {
    pub fn new(mu_hat: f64, y_low: f64, y_high: f64) -> Self {
        Self {
            mu_hat,
            y_low,
            y_high,
            c: 0.0,
        }
    }

    pub fn with_threshold(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub probes: usize,
    /// Indices of probes where `V(y_low) > V(y_high)`.
    pub violations: Vec<usize>,
}

impl MonotoneReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Probe a rule for monotonicity in `y`. Probes with `y_low > y_high` are
/// swapped before evaluation.
pub fn check_monotone(rule: &ScoreRule, probes: &[MonotoneProbe]) -> MonotoneReport {
    let violations = probes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (lo, hi) = if p.y_low <= p.y_high {
                (p.y_low, p.y_high)
            } else {
                (p.y_high, p.y_low)
            };
            (rule.eval(p.mu_hat, lo, p.c) > rule.eval(p.mu_hat, hi, p.c)).then_some(i)
        })
        .collect();
    MonotoneReport {
        probes: probes.len(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn residual_examples() {
        assert_eq!(residual_score(0.5, 2.0).unwrap(), 1.5);
        assert_eq!(residual_score(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(residual_score(-1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn residual_rejects_non_finite() {
        let err = residual_score(f64::NAN, 1.0).unwrap_err();
        assert!(err.to_string().contains("mu_hat"));
        let err = residual_score(0.0, f64::INFINITY).unwrap_err();
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn clipped_examples() {
        assert!((clipped_score(0.3, 1.0, 0.0, 100.0).unwrap() - 99.7).abs() < 1e-12);
        assert_eq!(clipped_score(0.3, 0.0, 0.0, 100.0).unwrap(), -0.3);
        assert_eq!(clipped_score(-0.4, 5.2, 6.0, 100.0).unwrap(), 0.4);
        assert!(clipped_score(0.0, 1.0, f64::NAN, 100.0).is_err());
    }

    #[test]
    fn threshold_only_form_ignores_prediction() {
        let rule = ScoreRule::clipped_threshold(100.0).unwrap();
        assert_eq!(rule.eval(3.0, 7.0, 6.0), 100.0);
        assert_eq!(rule.eval(-9.0, 6.0, 6.0), 100.0);
        assert_eq!(rule.eval(3.0, 5.0, 6.0), 6.0);
    }

    #[test]
    fn clip_constant_must_be_positive() {
        assert!(ScoreRule::clipped(0.0).is_err());
        assert!(ScoreRule::clipped(-1.0).is_err());
        assert!(ScoreRule::clipped(f64::INFINITY).is_err());
    }

    #[test]
    fn monotone_check_examples() {
        let res = check_monotone(&ScoreRule::Residual, &[MonotoneProbe::new(0.0, -1.0, 1.0)]);
        assert!(res.passed());
        let clip = check_monotone(&ScoreRule::Clipped { m: 100.0 }, &[MonotoneProbe::new(0.0, 0.0, 1.0)]);
        assert!(clip.passed());
        let neg = ScoreRule::Custom(CustomScore::new("neg", |_, y, _| -y));
        let report = check_monotone(&neg, &[MonotoneProbe::new(0.0, 0.0, 1.0)]);
        assert!(!report.passed());
        assert_eq!(report.violations, vec![0]);
    }

    #[test]
    fn clip_warning_fires_below_twice_sup() {
        let rule = ScoreRule::Clipped { m: 1.0 };
        assert!(rule.clip_warning(&[0.2, -0.6]).is_some());
        assert!(rule.clip_warning(&[0.2, -0.4]).is_none());
        assert!(ScoreRule::Residual.clip_warning(&[1e9]).is_none());
    }

    fn arb_rule() -> impl Strategy<Value = ScoreRule> {
        prop_oneof![
            Just(ScoreRule::Residual),
            (0.1f64..200.0).prop_map(|m| ScoreRule::Clipped { m }),
            (10.0f64..200.0).prop_map(|m| ScoreRule::ClippedThreshold { m }),
        ]
    }

    proptest! {
        #[test]
        fn built_in_rules_are_monotone(
            rule in arb_rule(),
            mu in -5.0f64..5.0,
            c in -5.0f64..5.0,
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(rule.eval(mu, lo, c) <= rule.eval(mu, hi, c));
        }

        #[test]
        fn large_clip_separates_classes(
            mus in prop::collection::vec(-3.0f64..3.0, 2..40),
            ys in prop::collection::vec(-2.0f64..2.0, 40),
            c in -1.0f64..1.0,
        ) {
            let sup = mus.iter().fold(0.0f64, |a, m| a.max(m.abs()));
            let rule = ScoreRule::Clipped { m: 2.0 * sup + 1e-9 };
            let scores: Vec<(f64, bool)> = mus.iter().zip(&ys).map(|(&mu, &y)| (rule.eval(mu, y, c), y > c)).collect();
            let lowest_pos = scores.iter().filter(|s| s.1).map(|s| s.0).fold(f64::INFINITY, f64::min);
            let highest_null = scores.iter().filter(|s| !s.1).map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lowest_pos > highest_null);
        }

        #[test]
        fn residual_at_constant_threshold_orders_by_prediction(
            mus in prop::collection::vec(-5.0f64..5.0, 1..30),
            c in -2.0f64..2.0,
        ) {
            let scores: Vec<f64> = mus.iter().map(|&mu| ScoreRule::Residual.eval(mu, c, c)).collect();
            let mut by_score: Vec<usize> = (0..mus.len()).collect();
            by_score.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let mut by_mu: Vec<usize> = (0..mus.len()).collect();
            by_mu.sort_by(|&a, &b| mus[b].total_cmp(&mus[a]).then(a.cmp(&b)));
            prop_assert_eq!(by_score, by_mu);
        }
    }
}
