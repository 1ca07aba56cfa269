//! Simulation study: eight data-generating processes and a Monte Carlo
//! harness estimating FDR, power and selection size.
//!
//! Covariates are `X ~ Unif[-1, 1]^20` and `Y = mu(X) + eps` with
//! `eps | X ~ N(0, sd(X)^2)`. Hypotheses are `Y <= 0`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bh::ErrorMetrics;
use crate::error::{check_level, Error, Result};
use crate::pipeline::{select, Dataset, Method, SelectConfig, ThresholdSpec, Unit};
use crate::rng::{derive_seed, stream};
use crate::score::{ScoreRule, DEFAULT_CLIP_M};

pub const DIM: usize = 20;

/// How noise entries written as squares (`σ²`, `2.25σ²`) are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReading {
    /// Squared entries give the variance, so the standard deviation is
    /// `σ` (setting 1) and `1.5σ` (setting 2).
    #[default]
    VarianceWhenSquared,
    /// Every entry is a standard deviation, squares included.
    StandardDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MeanFn {
    /// `4 x1 1{x2 > 0} max(0.5, x3) + 4 x1 1{x2 <= 0} min(x3, -0.5)`
    Gated,
    /// `5 (x1 x2 + exp(x4 - 1))`
    Interaction,
    /// `x1 1{x2 > 0, x4 > 0.5} (0.25 + x4) + x1 1{x2 <= 0, x4 < -0.5} (x4 - 0.25)`
    Sparse,
    /// `2 (x1 x2 + x3^2 + exp(x4 - 1) - 1)`
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NoiseFn {
    /// `k σ` (or `k σ²` as the alternative reading when squared)
    Homogeneous { k: f64, squared: bool },
    /// `σ (5.5 - |mu|) / 2`
    ShrinkingWithMean,
    /// `σ (0.25 mu² 1{|mu| < 2} + 0.5 |mu| 1{|mu| >= 1})`
    GrowingWithMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSetting {
    /// 1..=8 for the table settings, 0 for a constant-mean override.
    pub id: u8,
    pub sigma: f64,
    pub noise_reading: NoiseReading,
    constant_mean: Option<f64>,
}

impl DgpSetting {
    pub fn new(id: u8, sigma: f64) -> Result<Self> {
        if !(1..=8).contains(&id) {
            return Err(Error::Invalid(format!("setting must be in 1..=8, got {id}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            id,
            sigma,
            noise_reading: NoiseReading::default(),
            constant_mean: None,
        })
    }

    /// `mu ≡ mean` with homogeneous noise of standard deviation `sigma >= 0`.
    /// Used for pure-null and tie-saturated checks.
    pub fn constant_mean(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite() && mean.is_finite()) {
            return Err(Error::Invalid(format!("bad constant-mean override ({mean}, {sigma})")));
        }
        Ok(Self {
            id: 0,
            sigma,
            noise_reading: NoiseReading::default(),
            constant_mean: Some(mean),
        })
    }

    pub fn with_noise_reading(mut self, r: NoiseReading) -> Self {
        self.noise_reading = r;
        self
    }

    /// Whether this setting's noise entry is written with a square and so
    /// depends on [`NoiseReading`].
    pub fn squared_entry(&self) -> bool {
        matches!(self.id, 1 | 2)
    }

    pub fn label(&self) -> String {
        match self.constant_mean {
            Some(m) => format!("const({m})"),
            None => self.id.to_string(),
        }
    }

    fn mean_fn(&self) -> MeanFn {
        match self.id {
            1 => MeanFn::Gated,
            2..=4 => MeanFn::Interaction,
            5 => MeanFn::Sparse,
            _ => MeanFn::Quadratic,
        }
    }

    fn noise_fn(&self) -> NoiseFn {
        match self.id {
            1 => NoiseFn::Homogeneous { k: 1.0, squared: true },
            2 => NoiseFn::Homogeneous { k: 2.25, squared: true },
            5 => NoiseFn::Homogeneous { k: 1.0, squared: false },
            6 => NoiseFn::Homogeneous { k: 1.5, squared: false },
            3 | 7 => NoiseFn::ShrinkingWithMean,
            _ => NoiseFn::GrowingWithMean,
        }
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        if let Some(m) = self.constant_mean {
            return m;
        }
        match self.mean_fn() {
            MeanFn::Gated => {
                if x[1] > 0.0 {
                    4.0 * x[0] * x[2].max(0.5)
                } else {
                    4.0 * x[0] * x[2].min(-0.5)
                }
            }
            MeanFn::Interaction => 5.0 * (x[0] * x[1] + (x[3] - 1.0).exp()),
            MeanFn::Sparse => {
                if x[1] > 0.0 && x[3] > 0.5 {
                    x[0] * (0.25 + x[3])
                } else if x[1] <= 0.0 && x[3] < -0.5 {
                    x[0] * (x[3] - 0.25)
                } else {
                    0.0
                }
            }
            MeanFn::Quadratic => 2.0 * (x[0] * x[1] + x[2] * x[2] + (x[3] - 1.0).exp() - 1.0),
        }
    }

    /// Noise standard deviation at a point with conditional mean `mu`.
    ///
    /// Only `sd²` enters the noise law, so a negative expression (setting 3
    /// once `|mu| > 5.5`) is used through its absolute value.
    pub fn noise_sd(&self, mu: f64) -> f64 {
        let s = self.sigma;
        if self.constant_mean.is_some() {
            return s;
        }
        let sd = match self.noise_fn() {
            NoiseFn::Homogeneous { k, squared } => match (squared, self.noise_reading) {
                (true, NoiseReading::VarianceWhenSquared) => k.sqrt() * s,
                (true, NoiseReading::StandardDeviation) => k * s * s,
                (false, _) => k * s,
            },
            NoiseFn::ShrinkingWithMean => s * (5.5 - mu.abs()) / 2.0,
            // Both indicator terms apply on 1 <= |mu| < 2.
            NoiseFn::GrowingWithMean => {
                let a = mu.abs();
                let mut v = 0.0;
                if a < 2.0 {
                    v += 0.25 * mu * mu;
                }
                if a >= 1.0 {
                    v += 0.5 * a;
                }
                s * v
            }
        };
        sd.abs()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> SimRow {
        let mut x = [0.0; DIM];
        for xi in &mut x {
            *xi = rng.random_range(-1.0..=1.0);
        }
        let mu = self.mu(&x);
        let z: f64 = rng.sample(StandardNormal);
        SimRow {
            x,
            mu,
            y: mu + self.noise_sd(mu) * z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimRow {
    pub x: [f64; DIM],
    pub mu: f64,
    pub y: f64,
}

/// `n` i.i.d. rows.
pub fn generate(setting: &DgpSetting, n: usize, seed: u64) -> Vec<SimRow> {
    let mut rng = stream(seed, 0);
    draw_rows(setting, n, &mut rng)
}

fn draw_rows(setting: &DgpSetting, n: usize, rng: &mut ChaCha8Rng) -> Vec<SimRow> {
    (0..n).map(|_| setting.draw(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    /// `mu_hat = mu`, isolating calibration validity from model quality.
    OracleMu,
    /// Mean outcome of the `k` nearest training rows (Euclidean).
    Knn { k: usize },
}

impl Predictor {
    fn fit<'a>(&self, train: &'a [SimRow]) -> Box<dyn Fn(&SimRow) -> f64 + Sync + 'a> {
        match *self {
            Predictor::OracleMu => Box::new(|r: &SimRow| r.mu),
            Predictor::Knn { k } => Box::new(move |r: &SimRow| knn_predict(train, &r.x, k)),
        }
    }
}

fn knn_predict(train: &[SimRow], x: &[f64; DIM], k: usize) -> f64 {
    let mut d: Vec<(f64, f64)> = train
        .iter()
        .map(|t| (t.x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), t.y))
        .collect();
    let k = k.min(d.len()).max(1);
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
    d[..k].iter().map(|p| p.1).sum::<f64>() / k as f64
}

/// The three score configurations compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimScore {
    /// Same-class calibration with `V̂ = -mu_hat`.
    #[serde(rename = "BH_sub")]
    Sub,
    /// Residual score `y - mu_hat`.
    #[serde(rename = "BH_res")]
    Res,
    /// Clipped score `M 1{y > 0} - mu_hat`, `M = 100`.
    #[serde(rename = "BH_clip")]
    Clip,
}

impl SimScore {
    pub const ALL: [SimScore; 3] = [SimScore::Sub, SimScore::Res, SimScore::Clip];

    pub fn label(self) -> &'static str {
        match self {
            SimScore::Sub => "BH_sub",
            SimScore::Res => "BH_res",
            SimScore::Clip => "BH_clip",
        }
    }

    fn config(self, q: f64, seed: u64) -> SelectConfig {
        let (rule, method) = match self {
            SimScore::Sub => (ScoreRule::Residual, Method::SameClass),
            SimScore::Res => (ScoreRule::Residual, Method::Randomized),
            SimScore::Clip => (ScoreRule::Clipped { m: DEFAULT_CLIP_M }, Method::Randomized),
        };
        SelectConfig::new(rule, ThresholdSpec::constant(0.0), method, q).seed(seed)
    }
}

/// Outcome fed to the scores in the Monte Carlo harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeEncoding {
    /// `1{Y > 0}`. Only the residual score sees a difference.
    #[default]
    Binary,
    /// `Y` as drawn.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub setting: DgpSetting,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub q: f64,
    pub scores: Vec<SimScore>,
    pub predictor: Predictor,
    #[serde(default)]
    pub encoding: OutcomeEncoding,
    pub reps: usize,
    pub seed: u64,
}

impl McConfig {
    /// Desk-scale defaults: `n = m = 200`, 500 replications, oracle mean.
    pub fn new(setting: DgpSetting, q: f64, seed: u64) -> Self {
        Self {
            setting,
            n_train: 200,
            n_calib: 200,
            n_test: 200,
            q,
            scores: SimScore::ALL.to_vec(),
            predictor: Predictor::OracleMu,
            encoding: OutcomeEncoding::Binary,
            reps: 500,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        check_level(self.q)?;
        if self.n_calib == 0 || self.n_test == 0 || self.reps == 0 {
            return Err(Error::Invalid("sample sizes and replication count must be positive".into()));
        }
        if matches!(self.predictor, Predictor::Knn { .. }) && self.n_train == 0 {
            return Err(Error::Invalid("k-NN predictor needs training rows".into()));
        }
        if let Predictor::Knn { k: 0 } = self.predictor {
            return Err(Error::Invalid("k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub setting: String,
    pub score: String,
    pub q: f64,
    pub sigma: f64,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub reps: usize,
    pub fdr_mean: f64,
    pub fdr_se: f64,
    pub power_mean: f64,
    pub power_se: f64,
    pub nsel_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub seed: u64,
    /// Replications whose scores contained ties (deterministic p-values
    /// only).
    #[serde(default)]
    pub tie_flagged_reps: usize,
}

impl McReport {
    pub fn row(&self, score: SimScore) -> Option<&McRow> {
        self.rows.iter().find(|r| r.score == score.label())
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(setting: &DgpSetting, score: &str, q: f64, n: usize, m: usize, metrics: &[ErrorMetrics]) -> McRow {
    let fdp: Vec<f64> = metrics.iter().map(|e| e.fdp).collect();
    let power: Vec<f64> = metrics.iter().map(|e| e.power).collect();
    let nsel: Vec<f64> = metrics.iter().map(|e| e.n_selected as f64).collect();
    let (fdr_mean, fdr_se) = mean_se(&fdp);
    let (power_mean, power_se) = mean_se(&power);
    McRow {
        setting: setting.label(),
        score: score.to_string(),
        q,
        sigma: setting.sigma,
        n,
        m,
        reps: metrics.len(),
        fdr_mean,
        fdr_se,
        power_mean,
        power_se,
        nsel_mean: mean_se(&nsel).0,
    }
}

fn to_units(rows: &[SimRow], predict: &dyn Fn(&SimRow) -> f64, encoding: OutcomeEncoding) -> Vec<Unit> {
    let encode = |y: f64| match encoding {
        OutcomeEncoding::Binary => f64::from(u8::from(y > 0.0)),
        OutcomeEncoding::Raw => y,
    };
    rows.iter().map(|r| Unit::new(predict(r)).with_outcome(encode(r.y))).collect()
}

/// One replication: fresh calibration and test draws, every score kind run
/// on the same data with the same tie-breaking uniforms.
fn replicate(cfg: &McConfig, rep: usize) -> Result<Vec<ErrorMetrics>> {
    let rep_seed = derive_seed(cfg.seed, rep as u64);
    let mut rng = stream(rep_seed, 0);
    let calib = draw_rows(&cfg.setting, cfg.n_calib, &mut rng);
    let test = draw_rows(&cfg.setting, cfg.n_test, &mut rng);
    let train = match cfg.predictor {
        Predictor::OracleMu => Vec::new(),
        Predictor::Knn { .. } => draw_rows(&cfg.setting, cfg.n_train, &mut rng),
    };
    let predict = cfg.predictor.fit(&train);
    let data = Dataset::new(
        to_units(&calib, &*predict, cfg.encoding),
        to_units(&test, &*predict, cfg.encoding),
    );
    let u_seed = derive_seed(rep_seed, 1);
    cfg.scores
        .iter()
        .map(|s| match select(&data, &s.config(cfg.q, u_seed)) {
            Ok(r) => Ok(r.metrics.expect("test outcomes are present")),
            // No null-class calibration unit: nothing can be calibrated, select nothing.
            Err(Error::EmptyNullClass) => Ok(ErrorMetrics {
                fdp: 0.0,
                power: 0.0,
                n_selected: 0,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Monte Carlo estimates of FDR, power and `|R|` for each score kind.
///
/// Replications run in parallel; results are reduced in replication order,
/// so the report depends only on the configuration.
pub fn monte_carlo(cfg: &McConfig) -> Result<McReport> {
    cfg.validate()?;
    let per_rep: Vec<Vec<ErrorMetrics>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| replicate(cfg, rep))
        .collect::<Result<_>>()?;
    let rows = cfg
        .scores
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let m: Vec<ErrorMetrics> = per_rep.iter().map(|r| r[k]).collect();
            aggregate(&cfg.setting, s.label(), cfg.q, cfg.n_calib, cfg.n_test, &m)
        })
        .collect();
    Ok(McReport {
        rows,
        seed: cfg.seed,
        tie_flagged_reps: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeableConfig {
    pub setting: DgpSetting,
    pub population: usize,
    pub n_calib: usize,
    pub n_test: usize,
    pub q: f64,
    /// `Res` or `Clip`; same-class calibration is not part of this design.
    pub score: SimScore,
    pub reps: usize,
    pub seed: u64,
}

impl ExchangeableConfig {
    /// Population 2000, `n = 500`, `m = 100`, 500 replications.
    pub fn new(setting: DgpSetting, q: f64, seed: u64) -> Self {
        Self {
            setting,
            population: 2000,
            n_calib: 500,
            n_test: 100,
            q,
            score: SimScore::Clip,
            reps: 500,
            seed,
        }
    }
}

/// Finite-population design: each replication draws a population once,
/// then samples calibration and test units jointly without replacement and
/// selects with deterministic p-values and the oracle mean as predictor.
pub fn exchangeable_experiment(cfg: &ExchangeableConfig) -> Result<McReport> {
    check_level(cfg.q)?;
    if cfg.n_calib == 0 || cfg.n_test == 0 || cfg.reps == 0 {
        return Err(Error::Invalid("sample sizes and replication count must be positive".into()));
    }
    if cfg.n_calib + cfg.n_test > cfg.population {
        return Err(Error::Invalid(format!(
            "cannot draw {} units without replacement from a population of {}",
            cfg.n_calib + cfg.n_test,
            cfg.population
        )));
    }
    let rule = match cfg.score {
        SimScore::Res => ScoreRule::Residual,
        SimScore::Clip => ScoreRule::Clipped { m: DEFAULT_CLIP_M },
        SimScore::Sub => {
            return Err(Error::Invalid(
                "the exchangeable design supports BH_res and BH_clip only".into(),
            ))
        }
    };
    let select_cfg = SelectConfig::new(rule, ThresholdSpec::constant(0.0), Method::Deterministic, cfg.q);
    let per_rep: Vec<(ErrorMetrics, bool)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(derive_seed(cfg.seed, rep as u64), 0);
            let mut pop = draw_rows(&cfg.setting, cfg.population, &mut rng);
            let (chosen, _) = pop.partial_shuffle(&mut rng, cfg.n_calib + cfg.n_test);
            let units = to_units(chosen, &|r: &SimRow| r.mu, OutcomeEncoding::Raw);
            let (calib, test) = units.split_at(cfg.n_calib);
            let report = select(&Dataset::new(calib.to_vec(), test.to_vec()), &select_cfg)?;
            Ok((
                report.metrics.expect("test outcomes are present"),
                report.tie_count.unwrap_or(0) > 0,
            ))
        })
        .collect::<Result<_>>()?;
    let metrics: Vec<ErrorMetrics> = per_rep.iter().map(|r| r.0).collect();
    Ok(McReport {
        rows: vec![aggregate(
            &cfg.setting,
            cfg.score.label(),
            cfg.q,
            cfg.n_calib,
            cfg.n_test,
            &metrics,
        )],
        seed: cfg.seed,
        tie_flagged_reps: per_rep.iter().filter(|r| r.1).count(),
    })
}
