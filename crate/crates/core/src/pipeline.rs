//! End-to-end selection: thresholds, scores, p-values, BH.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bh::{bh_select, metrics, ErrorMetrics, SelectionResult};
use crate::error::{check_finite, check_level, Error, Result};
use crate::pvalue::{deterministic_pvalues, randomized_pvalues, CalibrationScores, PValueMethod, PValueVector};
use crate::rng::TieBreaker;
use crate::score::ScoreRule;

/// One calibration or test row.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: Option<String>,
    pub prediction: f64,
    pub outcome: Option<f64>,
    pub group: Option<String>,
    pub threshold: Option<f64>,
}

impl Unit {
    pub fn new(prediction: f64) -> Self {
        Self {
            prediction,
            ..Self::default()
        }
    }

    pub fn with_outcome(mut self, y: f64) -> Self {
        self.outcome = Some(y);
        self
    }

    pub fn with_group(mut self, g: impl Into<String>) -> Self {
        self.group = Some(g.into());
        self
    }

    pub fn with_threshold(mut self, c: f64) -> Self {
        self.threshold = Some(c);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub calibration: Vec<Unit>,
    pub test: Vec<Unit>,
}

impl Dataset {
    pub fn new(calibration: Vec<Unit>, test: Vec<Unit>) -> Self {
        Self { calibration, test }
    }

    fn validate(&self) -> Result<()> {
        for (set, units) in [("calibration", &self.calibration), ("test", &self.test)] {
            for (i, u) in units.iter().enumerate() {
                let field = |name: &str| format!("{set}[{i}].{name}");
                check_finite(&field("prediction"), u.prediction)?;
                if let Some(y) = u.outcome {
                    check_finite(&field("outcome"), y)?;
                }
                if let Some(c) = u.threshold {
                    check_finite(&field("threshold"), c)?;
                }
            }
        }
        Ok(())
    }
}

/// Training outcomes per group, for group-quantile thresholds.
pub type GroupedOutcomes = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// `c_j = tau`. `from_calibration` declares that `tau` was derived from
    /// the calibration data, which voids the guarantee; it only raises a
    /// warning.
    Constant { tau: f64, from_calibration: bool },
    /// `c_j` read from each unit's threshold column.
    PerSample,
    /// `c_j` = lower empirical `q_pop`-quantile of the unit's group among
    /// training outcomes.
    GroupQuantile { q_pop: f64 },
}

impl ThresholdSpec {
    pub fn constant(tau: f64) -> Self {
        ThresholdSpec::Constant {
            tau,
            from_calibration: false,
        }
    }
}

/// Smallest sample value whose empirical CDF reaches `level`.
pub fn lower_quantile(values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut k = ((level * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= level {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < level {
        k += 1;
    }
    Some(s[k - 1])
}

/// One threshold `c_j` per unit.
pub fn build_thresholds(spec: &ThresholdSpec, units: &[Unit], training: Option<&GroupedOutcomes>) -> Result<Vec<f64>> {
    match spec {
        ThresholdSpec::Constant { tau, .. } => {
            check_finite("threshold constant", *tau)?;
            Ok(vec![*tau; units.len()])
        }
        ThresholdSpec::PerSample => units
            .iter()
            .map(|u| u.threshold.ok_or_else(|| Error::MissingColumn("threshold".into())))
            .collect(),
        ThresholdSpec::GroupQuantile { q_pop } => {
            if !(*q_pop > 0.0 && *q_pop < 1.0) {
                return Err(Error::Invalid(format!("group quantile level must be in (0,1), got {q_pop}")));
            }
            let training = training.ok_or_else(|| Error::Invalid("group-quantile thresholds need training outcomes".into()))?;
            let quantiles: BTreeMap<&str, f64> = training
                .iter()
                .filter_map(|(g, ys)| lower_quantile(ys, *q_pop).map(|c| (g.as_str(), c)))
                .collect();
            let mut missing = BTreeSet::new();
            let mut out = Vec::with_capacity(units.len());
            for u in units {
                let g = u.group.as_deref().ok_or_else(|| Error::MissingColumn("group".into()))?;
                match quantiles.get(g) {
                    Some(&c) => out.push(c),
                    None => {
                        missing.insert(g.to_string());
                    }
                }
            }
            if missing.is_empty() {
                Ok(out)
            } else {
                Err(Error::UnknownGroups(missing.into_iter().collect()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Randomized conformal p-values against all calibration scores.
    Randomized,
    /// `(1 + #{V_i < V̂}) / (n + 1)`, for exchangeable tie-free scores.
    Deterministic,
    /// Calibrate on the null class only.
    SameClass,
}

impl Method {
    pub fn needs_seed(self) -> bool {
        !matches!(self, Method::Deterministic)
    }
}

#[derive(Debug, Clone)]
pub struct SelectConfig {
    pub rule: ScoreRule,
    pub thresholds: ThresholdSpec,
    pub method: Method,
    pub q: f64,
    pub seed: Option<u64>,
    pub training_outcomes: Option<GroupedOutcomes>,
}

impl SelectConfig {
    pub fn new(rule: ScoreRule, thresholds: ThresholdSpec, method: Method, q: f64) -> Self {
        Self {
            rule,
            thresholds,
            method,
            q,
            seed: None,
            training_outcomes: None,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn training_outcomes(mut self, t: GroupedOutcomes) -> Self {
        self.training_outcomes = Some(t);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub p: f64,
    pub v_hat: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selection: SelectionResult,
    pub units: Vec<UnitReport>,
    pub method: PValueMethod,
    pub score: String,
    pub seed: Option<u64>,
    /// Calibration units the p-values were ranked against (`n`, or `n0`
    /// for same-class calibration).
    pub n_calibration: usize,
    pub warnings: Vec<String>,
    /// Pooled score ties, reported for the deterministic method.
    pub tie_count: Option<usize>,
    /// FDP and power when every test unit carries an outcome.
    pub metrics: Option<ErrorMetrics>,
}

/// Run the selection procedure on `data`.
pub fn select(data: &Dataset, cfg: &SelectConfig) -> Result<SelectionReport> {
    let q = check_level(cfg.q)?;
    data.validate()?;
    if data.calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let seed = match (cfg.method.needs_seed(), cfg.seed) {
        (true, None) => {
            return Err(Error::Invalid(
                "a seed is required for randomized and same-class methods".into(),
            ))
        }
        (_, s) => s,
    };
    let rule = &cfg.rule;
    let training = cfg.training_outcomes.as_ref();

    let mut warnings = Vec::new();
    if let ThresholdSpec::Constant {
        from_calibration: true, ..
    } = cfg.thresholds
    {
        warnings.push("threshold was declared as derived from calibration data; FDR control is not guaranteed".to_string());
    }
    let all_predictions: Vec<f64> = data.calibration.iter().chain(&data.test).map(|u| u.prediction).collect();
    warnings.extend(rule.clip_warning(&all_predictions));

    let test_c = build_thresholds(&cfg.thresholds, &data.test, training)?;
    let v_hat: Vec<f64> = data
        .test
        .iter()
        .zip(&test_c)
        .map(|(u, &c)| rule.eval(u.prediction, c, c))
        .collect();

    let need_calib_c = rule.uses_threshold() || cfg.method == Method::SameClass;
    let calib_c = if need_calib_c {
        Some(build_thresholds(&cfg.thresholds, &data.calibration, training)?)
    } else {
        None
    };
    let calib_outcome = |i: usize| {
        data.calibration[i]
            .outcome
            .ok_or_else(|| Error::MissingColumn(format!("outcome (calibration row {i})")))
    };
    let c_of = |i: usize| calib_c.as_ref().map_or(0.0, |c| c[i]);

    let (pvals, n_cal, tie_count): (PValueVector, usize, Option<usize>) = match cfg.method {
        Method::Randomized | Method::Deterministic => {
            let scores = (0..data.calibration.len())
                .map(|i| Ok(rule.eval(data.calibration[i].prediction, calib_outcome(i)?, c_of(i))))
                .collect::<Result<Vec<_>>>()?;
            let calib = CalibrationScores::new(scores)?;
            if cfg.method == Method::Randomized {
                let tb = TieBreaker::new(seed.expect("checked above"));
                (randomized_pvalues(&calib, &v_hat, tb)?, calib.len(), None)
            } else {
                let (p, ties) = deterministic_pvalues(&calib, &v_hat)?;
                if ties > 0 {
                    warnings.push(format!(
                        "{ties} tied scores; the deterministic p-value guarantee assumes none"
                    ));
                }
                (p, calib.len(), Some(ties))
            }
        }
        Method::SameClass => {
            let mut class0 = Vec::new();
            for i in 0..data.calibration.len() {
                let c = c_of(i);
                if calib_outcome(i)? <= c {
                    class0.push(rule.eval(data.calibration[i].prediction, c, c));
                }
            }
            if class0.is_empty() {
                return Err(Error::EmptyNullClass);
            }
            let tb = TieBreaker::new(seed.expect("checked above"));
            let calib = CalibrationScores::new(class0)?;
            let mut p = randomized_pvalues(&calib, &v_hat, tb)?;
            p.method = PValueMethod::SameClass;
            (p, calib.len(), None)
        }
    };

    let selection = bh_select(pvals.as_slice(), q)?;
    let truth: Option<Vec<bool>> = data
        .test
        .iter()
        .zip(&test_c)
        .map(|(u, &c)| u.outcome.map(|y| y > c))
        .collect();
    let metrics = match truth {
        Some(t) if !t.is_empty() => Some(metrics(&selection.selected, &t)?),
        _ => None,
    };
    let units = pvals
        .p
        .iter()
        .zip(&v_hat)
        .zip(&test_c)
        .map(|((&p, &v_hat), &c)| UnitReport { p, v_hat, c })
        .collect();

    Ok(SelectionReport {
        selection,
        units,
        method: pvals.method,
        score: rule.to_string(),
        seed: if cfg.method.needs_seed() { seed } else { None },
        n_calibration: n_cal,
        warnings,
        tie_count,
        metrics,
    })
}
