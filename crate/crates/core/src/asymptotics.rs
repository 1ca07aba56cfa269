//! Large-sample behaviour of the selection procedure.
//!
//! As `n, m -> ∞` the BH threshold on conformal p-values converges to
//!
//! ```text
//! t* = sup { t in [0,1] : t / P(F(V(X,c), U) <= t) <= q },
//! F(v, u) = P(V(X,Y) < v) + u * P(V(X,Y) = v),
//! ```
//!
//! and the FDR and power converge to plug-in ratios of the event
//! `F(V(X,c), U) <= t*`. This module estimates all of these from a large
//! i.i.d. population sample. `F` is written with the score first and the
//! uniform second throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bh::sup_threshold;
use crate::error::{check_finite, check_level, Error, Result};
use crate::rng::{stream, TieBreaker};
use crate::score::ScoreRule;

/// Paired population draws: `v_full = V(X, Y)`, `v_null = V(X, c)` and
/// `y_exceeds = 1{Y > c}` for the same unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    pub v_full: Vec<f64>,
    pub v_null: Vec<f64>,
    pub y_exceeds: Vec<bool>,
}

impl PopulationSample {
    pub fn new(v_full: Vec<f64>, v_null: Vec<f64>, y_exceeds: Vec<bool>) -> Result<Self> {
        if v_full.is_empty() {
            return Err(Error::Invalid("population sample is empty".into()));
        }
        if v_full.len() != v_null.len() || v_full.len() != y_exceeds.len() {
            return Err(Error::contract(format!(
                "population columns differ in length: {} / {} / {}",
                v_full.len(),
                v_null.len(),
                y_exceeds.len()
            )));
        }
        for &v in v_full.iter().chain(&v_null) {
            check_finite("population score", v)?;
        }
        Ok(Self {
            v_full,
            v_null,
            y_exceeds,
        })
    }

    /// Score `(mu_hat, y, c)` rows with `rule`.
    pub fn from_rows(rule: &ScoreRule, rows: &[(f64, f64, f64)]) -> Result<Self> {
        let v_full = rows.iter().map(|&(mu, y, c)| rule.eval(mu, y, c)).collect();
        let v_null = rows.iter().map(|&(mu, _, c)| rule.eval(mu, c, c)).collect();
        let y_exceeds = rows.iter().map(|&(_, y, c)| y > c).collect();
        Self::new(v_full, v_null, y_exceeds)
    }

    pub fn len(&self) -> usize {
        self.v_full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_full.is_empty()
    }
}

/// Plug-in `F(v, u) = P̂(V < v) + u * P̂(V = v)`.
#[derive(Debug, Clone)]
pub struct EmpiricalF {
    sorted: Vec<f64>,
}

pub fn empirical_f(v_full: &[f64]) -> Result<EmpiricalF> {
    if v_full.is_empty() {
        return Err(Error::Invalid("empirical F needs a non-empty sample".into()));
    }
    let mut sorted = v_full.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalF { sorted })
}

impl EmpiricalF {
    pub fn eval(&self, v: f64, u: f64) -> f64 {
        let below = self.sorted.partition_point(|&s| s < v);
        let ties = self.sorted.partition_point(|&s| s <= v) - below;
        (below as f64 + u * ties as f64) / self.sorted.len() as f64
    }

    /// `sup { v : P̂(V <= v) <= t }`; `None` when the supremum is unbounded.
    pub fn upper_level(&self, t: f64) -> Option<f64> {
        let n = self.sorted.len();
        let k = (0..=n).rev().find(|&k| k as f64 / n as f64 <= t).unwrap_or(0);
        self.sorted.get(k).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStarOptions {
    /// Width of the window left of `t*` searched for strict feasibility.
    pub epsilon: f64,
    /// How far below `q` the ratio must fall to count as strict.
    pub margin: f64,
}

impl Default for TStarOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStar {
    pub t_star: f64,
    /// Whether some `t` in `(t* - epsilon, t*)` has `t / P̂(F <= t) < q`.
    pub condition_flag: bool,
}

pub fn solve_tstar(f_values: &[f64], q: f64) -> Result<TStar> {
    solve_tstar_with(f_values, q, TStarOptions::default())
}

pub fn solve_tstar_with(f_values: &[f64], q: f64, opts: TStarOptions) -> Result<TStar> {
    let q = check_level(q)?;
    if f_values.is_empty() {
        return Err(Error::Invalid("t* needs at least one F value".into()));
    }
    let t_star = sup_threshold(f_values, q);
    Ok(TStar {
        t_star,
        condition_flag: strictly_feasible_below(f_values, q, t_star, opts),
    })
}

fn strictly_feasible_below(f_values: &[f64], q: f64, t_star: f64, opts: TStarOptions) -> bool {
    if t_star <= 0.0 {
        return false;
    }
    let mut sorted = f_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let lo = (t_star - opts.epsilon).max(0.0);
    let ratio = |t: f64| {
        let count = sorted.partition_point(|&f| f <= t);
        if count == 0 {
            f64::INFINITY
        } else {
            t * n / count as f64
        }
    };
    // The ratio increases within each constant-count piece, so its minima
    // over the window sit at piece starts.
    let start = sorted.partition_point(|&f| f <= lo);
    let end = sorted.partition_point(|&f| f < t_star);
    let breakpoints = sorted[start..end].iter().copied();
    let grid = (1..64).map(|k| lo + (t_star - lo) * k as f64 / 64.0);
    let include_lo = lo > t_star - opts.epsilon;
    breakpoints
        .chain(grid)
        .chain(include_lo.then_some(lo))
        .filter(|&t| t < t_star)
        .any(|t| ratio(t) < q - opts.margin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub t_star: f64,
    pub fdr_limit: f64,
    pub power_limit: f64,
    pub condition_flag: bool,
    /// `sup { v : P̂(V(X,Y) <= v) <= t* }`, a heuristic diagnostic; `None`
    /// when unbounded.
    pub v_star: Option<f64>,
    pub q: f64,
    pub n_pop: usize,
    pub seed: u64,
}

/// Limiting FDR and power of the selection procedure on `pop`.
pub fn asymptotic_fdr_power(pop: &PopulationSample, q: f64, seed: u64) -> Result<AsymptoticReport> {
    let q = check_level(q)?;
    let f_hat = empirical_f(&pop.v_full)?;
    let tb = TieBreaker::new(seed);
    let f_values: Vec<f64> = pop.v_null.iter().enumerate().map(|(j, &v)| f_hat.eval(v, tb.u(j))).collect();
    let TStar { t_star, condition_flag } = solve_tstar(&f_values, q)?;

    let mut selected = 0usize;
    let mut false_sel = 0usize;
    let mut true_sel = 0usize;
    for (&f, &pos) in f_values.iter().zip(&pop.y_exceeds) {
        if f <= t_star {
            selected += 1;
            if pos {
                true_sel += 1;
            } else {
                false_sel += 1;
            }
        }
    }
    let n_pos = pop.y_exceeds.iter().filter(|&&p| p).count();
    let (t_star, condition_flag) = if selected == 0 {
        (0.0, false)
    } else {
        (t_star, condition_flag)
    };
    Ok(AsymptoticReport {
        t_star,
        fdr_limit: false_sel as f64 / selected.max(1) as f64,
        power_limit: true_sel as f64 / n_pos.max(1) as f64,
        condition_flag,
        v_star: f_hat.upper_level(t_star),
        q,
        n_pop: pop.len(),
        seed,
    })
}

/// Synthetic populations whose `F`-value law is known in closed form. All
/// use the threshold `c = 0` and draw `w ~ Unif(0, 1)` per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum MixtureDesign {
    /// Residual score. Nulls (share `pi0`): `mu_hat = -w`, `Y = 0`.
    /// Non-nulls: `mu_hat = 1 + w`, `Y = 1 + 2w`. Then `V(X, Y) = w` for
    /// everyone and `F(V(X, 0))` is a point mass `1 - pi0` at 0 plus
    /// `Unif(0, 1)` with mass `pi0`.
    PointMassUniform { pi0: f64 },
    /// Clipped score with `M = 100`. Nulls: `mu_hat = w`, `Y = 0`.
    /// Non-nulls: `mu_hat = 1 + w`, `Y = 1`. The classes are perfectly
    /// separated, so `F(V(X, 0))` is a point mass `1 - pi0` at 0 plus
    /// density 1 on `[0, pi0]`.
    SeparatedClasses { pi0: f64 },
    /// Every unit is null: `mu_hat = -w`, `Y = 0`.
    PureNull,
}

impl MixtureDesign {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MixtureDesign::PointMassUniform { pi0 } | MixtureDesign::SeparatedClasses { pi0 } if !(0.0..=1.0).contains(&pi0) => {
                Err(Error::Invalid(format!("pi0 must be in [0,1], got {pi0}")))
            }
            _ => Ok(()),
        }
    }

    pub fn rule(&self) -> ScoreRule {
        match self {
            MixtureDesign::SeparatedClasses { .. } => ScoreRule::Clipped { m: 100.0 },
            _ => ScoreRule::Residual,
        }
    }

    fn null_share(&self) -> f64 {
        match *self {
            MixtureDesign::PointMassUniform { pi0 } | MixtureDesign::SeparatedClasses { pi0 } => pi0,
            MixtureDesign::PureNull => 1.0,
        }
    }

    /// `(mu_hat, y)` rows, threshold 0.
    pub fn rows(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = stream(seed, 0);
        let pi0 = self.null_share();
        (0..n)
            .map(|_| {
                let null = rng.random::<f64>() < pi0;
                let w: f64 = rng.random();
                match (self, null) {
                    (MixtureDesign::SeparatedClasses { .. }, true) => (w, 0.0),
                    (MixtureDesign::SeparatedClasses { .. }, false) => (1.0 + w, 1.0),
                    (_, true) => (-w, 0.0),
                    (_, false) => (1.0 + w, 1.0 + 2.0 * w),
                }
            })
            .collect()
    }

    pub fn population(&self, n: usize, seed: u64) -> Result<PopulationSample> {
        self.validate()?;
        let rows: Vec<(f64, f64, f64)> = self.rows(n, seed).into_iter().map(|(mu, y)| (mu, y, 0.0)).collect();
        PopulationSample::from_rows(&self.rule(), &rows)
    }

    /// Closed-form `t*` at level `q`.
    pub fn analytic_tstar(&self, q: f64) -> f64 {
        match *self {
            // t = q (1 - pi0 + pi0 t)
            MixtureDesign::PointMassUniform { pi0 } => q * (1.0 - pi0) / (1.0 - q * pi0),
            // t = q (1 - pi0 + t), valid while t <= pi0
            MixtureDesign::SeparatedClasses { pi0 } => (q * (1.0 - pi0) / (1.0 - q)).min(pi0),
            MixtureDesign::PureNull => 0.0,
        }
    }

    /// Closed-form limiting FDR at level `q`.
    pub fn analytic_fdr(&self, q: f64) -> f64 {
        let t = self.analytic_tstar(q);
        match *self {
            MixtureDesign::PointMassUniform { pi0 } => pi0 * t / (1.0 - pi0 + pi0 * t),
            MixtureDesign::SeparatedClasses { pi0 } => t / (1.0 - pi0 + t),
            MixtureDesign::PureNull => 0.0,
        }
    }
}
