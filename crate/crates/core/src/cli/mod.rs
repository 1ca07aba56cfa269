//! Command-line front end: `cfscreen select | simulate | asymptotics`.
//!
//! Inputs are headed CSV files, outputs are JSON (and CSV for simulation
//! tables). Exit codes: 0 success, 2 validation failure, 3 I/O failure.

mod io;
mod report;

use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asymptotics::{asymptotic_fdr_power, MixtureDesign, PopulationSample};
use crate::error::{Error, Result};
use crate::pipeline::{self, Dataset, GroupedOutcomes, Method, SelectConfig, ThresholdSpec, Unit};
use crate::score::{ScoreRule, DEFAULT_CLIP_M};
use crate::sim::{
    self, DgpSetting, ExchangeableConfig, McConfig, McReport, McRow, NoiseReading, OutcomeEncoding, Predictor, SimScore,
};

pub use io::{write_atomic, Table};
pub use report::{AsymptoticsFile, ReportFile, ReportMeta, UnitEntry};

#[derive(Debug, Parser)]
#[command(name = "cfscreen", version, about = "Conformal selection with FDR control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select test units whose outcome exceeds its threshold.
    Select(SelectArgs),
    /// Run the Monte Carlo simulation study.
    Simulate(SimulateArgs),
    /// Estimate the limiting BH threshold, FDR and power.
    Asymptotics(AsymptoticsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreArg {
    Res,
    Clip,
    ClipThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Rand,
    Dtm,
    Sub,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rand => Method::Randomized,
            MethodArg::Dtm => Method::Deterministic,
            MethodArg::Sub => Method::SameClass,
        }
    }
}

fn score_rule(kind: ScoreArg, m: f64) -> Result<ScoreRule> {
    match kind {
        ScoreArg::Res => Ok(ScoreRule::Residual),
        ScoreArg::Clip => ScoreRule::clipped(m),
        ScoreArg::ClipThreshold => ScoreRule::clipped_threshold(m),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("threshold").required(true).args(["threshold_col", "threshold_const", "group_quantile"])))]
pub struct SelectArgs {
    /// Calibration CSV (prediction and outcome columns required).
    #[arg(long)]
    pub calib: PathBuf,
    /// Test CSV. An outcome column, if present, switches on evaluation metrics.
    #[arg(long)]
    pub test: PathBuf,
    /// Prediction column.
    #[arg(long)]
    pub pred: String,
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub outcome: String,
    /// Group column, for group-quantile thresholds.
    #[arg(long)]
    pub group: Option<String>,
    /// Unit identifier column; row numbers are used otherwise.
    #[arg(long)]
    pub id: Option<String>,
    /// Per-unit threshold column.
    #[arg(long)]
    pub threshold_col: Option<String>,
    /// Constant threshold for every unit.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold_const: Option<f64>,
    /// Threshold = this quantile of the unit's group among training outcomes.
    #[arg(long)]
    pub group_quantile: Option<f64>,
    /// Training CSV with group and outcome columns (group-quantile mode).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Declare that the constant threshold was derived from calibration data.
    #[arg(long)]
    pub threshold_from_calibration: bool,
    #[arg(long, value_enum)]
    pub score: ScoreArg,
    #[arg(long = "clip-M", default_value_t = DEFAULT_CLIP_M)]
    pub clip_m: f64,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimScoreArg {
    Sub,
    Res,
    Clip,
}

impl From<SimScoreArg> for SimScore {
    fn from(s: SimScoreArg) -> Self {
        match s {
            SimScoreArg::Sub => SimScore::Sub,
            SimScoreArg::Res => SimScore::Res,
            SimScoreArg::Clip => SimScore::Clip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorArg {
    Oracle,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseReadingArg {
    /// Squared table entries are variances.
    Variance,
    /// Every table entry is a standard deviation.
    Sd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingArg {
    Binary,
    Raw,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Settings to run (1-8); all by default.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=8))]
    pub setting: Vec<u8>,
    /// Noise levels.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub sigma: Vec<f64>,
    /// FDR targets.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub q: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    /// Monte Carlo replications per configuration.
    #[arg(long = "reps", visible_alias = "N", default_value_t = 500)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SimScoreArg::Sub, SimScoreArg::Res, SimScoreArg::Clip])]
    pub scores: Vec<SimScoreArg>,
    #[arg(long, value_enum, default_value_t = PredictorArg::Oracle)]
    pub predictor: PredictorArg,
    #[arg(long, default_value_t = 20)]
    pub knn_k: usize,
    #[arg(long, value_enum, default_value_t = NoiseReadingArg::Variance)]
    pub noise_reading: NoiseReadingArg,
    /// Outcome seen by the scores: `1{y > 0}` or `y` itself.
    #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
    pub outcome_encoding: EncodingArg,
    /// Finite-population design with deterministic p-values.
    #[arg(long)]
    pub exchangeable: bool,
    /// Population size for the finite-population design.
    #[arg(long, default_value_t = 2000)]
    pub population: usize,
    /// One row per configuration; standard output when neither output is set.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Long-format table (one row per configuration and metric) for plotting.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorArg {
    /// `F` values: point mass `1 - pi0` at 0 plus `pi0 * Unif(0,1)`.
    #[value(alias = "mixture")]
    PointMassUniform,
    /// Perfectly separated classes under the clipped score.
    Separated,
    /// Every unit null.
    PureNull,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["generator", "population", "setting"])))]
pub struct AsymptoticsArgs {
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    /// CSV with columns v_full, v_null, y_exceeds.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Simulation setting (oracle mean, threshold 0).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub setting: Option<u8>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = ScoreArg::Clip)]
    pub score: ScoreArg,
    #[arg(long = "clip-M", default_value_t = DEFAULT_CLIP_M)]
    pub clip_m: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pi0: f64,
    #[arg(long, default_value_t = 200_000)]
    pub n_pop: usize,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub seed: u64,
    /// Output file; standard output otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(a) => cmd_select(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Asymptotics(a) => cmd_asymptotics(&a),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_units(table: &Table, args: &SelectArgs, outcome_required: bool) -> Result<Vec<Unit>> {
    let pred = table.reals(&args.pred)?;
    let outcome = if outcome_required {
        table.reals(&args.outcome)?.into_iter().map(Some).collect()
    } else if table.has(&args.outcome) {
        table.optional_reals(&args.outcome)?
    } else {
        vec![None; table.len()]
    };
    let group = match &args.group {
        Some(g) => table.strings(g)?.into_iter().map(Some).collect(),
        None => vec![None; table.len()],
    };
    let threshold = match &args.threshold_col {
        Some(c) if outcome_required && !table.has(c) => vec![None; table.len()],
        Some(c) => table.optional_reals(c)?,
        None => vec![None; table.len()],
    };
    // Identifiers only matter for test units.
    let ids = match &args.id {
        Some(c) if outcome_required && !table.has(c) => vec![None; table.len()],
        Some(c) => table.strings(c)?.into_iter().map(Some).collect(),
        None => vec![None; table.len()],
    };
    Ok(pred
        .into_iter()
        .zip(outcome)
        .zip(group)
        .zip(threshold)
        .zip(ids)
        .map(|((((prediction, outcome), group), threshold), id)| Unit {
            id,
            prediction,
            outcome,
            group,
            threshold,
        })
        .collect())
}

fn threshold_spec(args: &SelectArgs) -> Result<ThresholdSpec> {
    match (args.threshold_const, args.group_quantile, &args.threshold_col) {
        (Some(tau), _, _) => Ok(ThresholdSpec::Constant {
            tau,
            from_calibration: args.threshold_from_calibration,
        }),
        (_, Some(q_pop), _) => Ok(ThresholdSpec::GroupQuantile { q_pop }),
        (_, _, Some(_)) => Ok(ThresholdSpec::PerSample),
        _ => Err(Error::Invalid("a threshold mode is required".into())),
    }
}

fn training_outcomes(args: &SelectArgs) -> Result<Option<GroupedOutcomes>> {
    if args.group_quantile.is_none() {
        return Ok(None);
    }
    let path = args
        .train
        .as_ref()
        .ok_or_else(|| Error::Invalid("--group-quantile needs --train".into()))?;
    let group = args
        .group
        .as_ref()
        .ok_or_else(|| Error::Invalid("--group-quantile needs --group".into()))?;
    let table = Table::read(path)?;
    let mut out = GroupedOutcomes::new();
    for (g, y) in table.strings(group)?.into_iter().zip(table.reals(&args.outcome)?) {
        out.entry(g).or_default().push(y);
    }
    Ok(Some(out))
}

pub fn cmd_select(args: &SelectArgs) -> Result<()> {
    crate::error::check_level(args.q)?;
    let method = Method::from(args.method);
    if method.needs_seed() && args.seed.is_none() {
        return Err(Error::Invalid("--seed is required for --method rand and --method sub".into()));
    }
    let rule = score_rule(args.score, args.clip_m)?;
    let calib = load_units(&Table::read(&args.calib)?, args, true)?;
    let test_table = Table::read(&args.test)?;
    let test = load_units(&test_table, args, false)?;
    let ids: Vec<String> = test
        .iter()
        .enumerate()
        .map(|(j, u)| u.id.clone().unwrap_or_else(|| j.to_string()))
        .collect();

    let mut cfg = SelectConfig::new(rule, threshold_spec(args)?, method, args.q);
    cfg.seed = args.seed.filter(|_| method.needs_seed());
    cfg.training_outcomes = training_outcomes(args)?;

    let report = pipeline::select(&Dataset::new(calib, test), &cfg)?;
    let file = ReportFile::new(&report, ids, serde_json::to_value(args)?);
    write_atomic(&args.out, &to_json(&file)?)?;

    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "selected {} of {} test units (k* = {}, tau_hat = {}) -> {}",
        report.selection.selected.len(),
        report.units.len(),
        report.selection.k_star,
        report.selection.tau_hat,
        args.out.display()
    );
    Ok(())
}

const CSV_HEADER: [&str; 12] = [
    "setting",
    "score",
    "q",
    "sigma",
    "n",
    "m",
    "N",
    "fdr_mean",
    "fdr_se",
    "power_mean",
    "power_se",
    "nsel_mean",
];

fn csv_bytes(rows: &[McRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: PathBuf::from("<simulation table>"),
        source,
    };
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.setting.clone(),
            r.score.clone(),
            r.q.to_string(),
            r.sigma.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.reps.to_string(),
            r.fdr_mean.to_string(),
            r.fdr_se.to_string(),
            r.power_mean.to_string(),
            r.power_se.to_string(),
            r.nsel_mean.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: PathBuf::from("<simulation table>"),
        source: e.into_error(),
    })
}

fn plot_bytes(rows: &[McRow]) -> Result<Vec<u8>> {
    let mut out = String::from("setting,score,q,sigma,metric,value,se\n");
    for r in rows {
        for (metric, value, se) in [
            ("fdr", r.fdr_mean, r.fdr_se),
            ("power", r.power_mean, r.power_se),
            ("nsel", r.nsel_mean, f64::NAN),
        ] {
            let se = if se.is_nan() { String::new() } else { se.to_string() };
            out.push_str(&format!(
                "{},{},{},{},{metric},{value},{se}\n",
                r.setting, r.score, r.q, r.sigma
            ));
        }
    }
    Ok(out.into_bytes())
}

#[derive(Debug, Serialize)]
struct SimulationFile<'a> {
    version: &'a str,
    config: &'a SimulateArgs,
    rows: Vec<McRow>,
    tie_flagged_reps: usize,
}

/// Run every configuration of the grid and return the rows in grid order.
pub fn simulate_rows(args: &SimulateArgs) -> Result<(Vec<McRow>, usize)> {
    let settings: Vec<u8> = if args.setting.is_empty() {
        (1..=8).collect()
    } else {
        args.setting.clone()
    };
    for &q in &args.q {
        crate::error::check_level(q)?;
    }
    let reading = match args.noise_reading {
        NoiseReadingArg::Variance => NoiseReading::VarianceWhenSquared,
        NoiseReadingArg::Sd => NoiseReading::StandardDeviation,
    };
    let predictor = match args.predictor {
        PredictorArg::Oracle => Predictor::OracleMu,
        PredictorArg::Knn => Predictor::Knn { k: args.knn_k },
    };
    let scores: Vec<SimScore> = args.scores.iter().map(|&s| s.into()).collect();
    if args.exchangeable && scores.contains(&SimScore::Sub) && args.scores.len() != 3 {
        return Err(Error::Invalid(
            "the exchangeable design supports --scores res,clip only".into(),
        ));
    }
    let total = settings.len() * args.sigma.len() * args.q.len();
    let mut rows = Vec::new();
    let mut ties = 0;
    let mut done = 0;
    for &id in &settings {
        for &sigma in &args.sigma {
            for &q in &args.q {
                let setting = DgpSetting::new(id, sigma)?.with_noise_reading(reading);
                done += 1;
                eprintln!("[{done}/{total}] setting {id}, sigma {sigma}, q {q}");
                let key = sim_key(id, sigma, q);
                let seed = crate::rng::derive_seed(args.seed, key);
                if args.exchangeable {
                    for &score in scores.iter().filter(|s| **s != SimScore::Sub) {
                        let mut cfg = ExchangeableConfig::new(setting, q, seed);
                        cfg.population = args.population;
                        cfg.n_calib = args.n;
                        cfg.n_test = args.m;
                        cfg.reps = args.reps;
                        cfg.score = score;
                        let report: McReport = sim::exchangeable_experiment(&cfg)?;
                        ties += report.tie_flagged_reps;
                        rows.extend(report.rows);
                    }
                } else {
                    let mut cfg = McConfig::new(setting, q, seed);
                    cfg.n_train = args.n_train;
                    cfg.n_calib = args.n;
                    cfg.n_test = args.m;
                    cfg.reps = args.reps;
                    cfg.scores = scores.clone();
                    cfg.predictor = predictor;
                    cfg.encoding = match args.outcome_encoding {
                        EncodingArg::Binary => OutcomeEncoding::Binary,
                        EncodingArg::Raw => OutcomeEncoding::Raw,
                    };
                    rows.extend(sim::monte_carlo(&cfg)?.rows);
                }
            }
        }
    }
    Ok((rows, ties))
}

/// Stable key for one grid cell, so a cell's seed does not depend on which
/// other cells are in the grid.
fn sim_key(id: u8, sigma: f64, q: f64) -> u64 {
    (id as u64) ^ sigma.to_bits().rotate_left(8) ^ q.to_bits().rotate_left(40)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (rows, ties) = simulate_rows(args)?;
    let csv = csv_bytes(&rows)?;
    if let Some(p) = &args.out_csv {
        write_atomic(p, &csv)?;
    }
    if let Some(p) = &args.out_json {
        let file = SimulationFile {
            version: crate::VERSION,
            config: args,
            rows: rows.clone(),
            tie_flagged_reps: ties,
        };
        write_atomic(p, &to_json(&file)?)?;
    }
    if let Some(p) = &args.emit_plot_data {
        write_atomic(p, &plot_bytes(&rows)?)?;
    }
    if args.out_csv.is_none() && args.out_json.is_none() {
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}

fn read_population(path: &Path) -> Result<PopulationSample> {
    let t = Table::read(path)?;
    PopulationSample::new(t.reals("v_full")?, t.reals("v_null")?, t.booleans("y_exceeds")?)
}

pub fn cmd_asymptotics(args: &AsymptoticsArgs) -> Result<()> {
    crate::error::check_level(args.q)?;
    let design = args.generator.map(|g| match g {
        GeneratorArg::PointMassUniform => MixtureDesign::PointMassUniform { pi0: args.pi0 },
        GeneratorArg::Separated => MixtureDesign::SeparatedClasses { pi0: args.pi0 },
        GeneratorArg::PureNull => MixtureDesign::PureNull,
    });
    let pop = if let Some(d) = &design {
        d.population(args.n_pop, args.seed)?
    } else if let Some(path) = &args.population {
        read_population(path)?
    } else {
        let setting = DgpSetting::new(args.setting.expect("source group is required"), args.sigma)?;
        let rule = score_rule(args.score, args.clip_m)?;
        let rows: Vec<(f64, f64, f64)> = sim::generate(&setting, args.n_pop, args.seed)
            .into_iter()
            .map(|r| (r.mu, r.y, 0.0))
            .collect();
        PopulationSample::from_rows(&rule, &rows)?
    };
    let report = asymptotic_fdr_power(&pop, args.q, crate::rng::derive_seed(args.seed, 1))?;
    let file = AsymptoticsFile {
        version: crate::VERSION.to_string(),
        config: serde_json::to_value(args)?,
        report,
        analytic_t_star: design.map(|d| d.analytic_tstar(args.q)),
        analytic_fdr: design.map(|d| d.analytic_fdr(args.q)),
    };
    let bytes = to_json(&file)?;
    match &args.out {
        Some(p) => write_atomic(p, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}
