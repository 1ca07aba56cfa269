//! End-to-end runs of the `cfscreen` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use conformal_screening::rng::TieBreaker;
use serde_json::Value;
use tempfile::TempDir;

fn cfscreen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfscreen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Toy {
    dir: TempDir,
    calib: PathBuf,
    test: PathBuf,
}

fn toy() -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let calib = write(dir.path(), "calib.csv", "mu,y\n0.1,0\n0.2,0\n0.8,1\n0.9,1\n");
    let test = write(dir.path(), "test.csv", "name,mu\nlow,0.05\nhigh,0.95\n");
    Toy { dir, calib, test }
}

fn select_args<'a>(t: &'a Toy, out: &'a Path, q: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "select",
        "--calib",
        s(&t.calib),
        "--test",
        s(&t.test),
        "--pred",
        "mu",
        "--id",
        "name",
        "--threshold-const",
        "0",
        "--score",
        "clip",
        "--method",
        "rand",
        "--q",
        q,
        "--seed",
        seed,
        "--out",
        s(out),
    ]
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn toy_selects_only_the_high_prediction() {
    // p_low = (2 + u_0) / 5 clears the second BH step only when u_0 <= 0.5;
    // pick a seed where it does not.
    let seed = (0u64..).find(|&s| TieBreaker::new(s).u(0) > 0.5).unwrap().to_string();
    let t = toy();
    let out = t.dir.path().join("report.json");
    let o = cfscreen(&select_args(&t, &out, "0.5", &seed));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["selected"], serde_json::json!([1]));
    assert_eq!(r["k_star"], 1);
    assert_eq!(r["units"][1]["id"], "high");
    assert_eq!(r["meta"]["method"], "randomized");
    assert_eq!(r["meta"]["n"], 4);
    assert_eq!(r["meta"]["m"], 2);
    assert_eq!(r["meta"]["version"], conformal_screening::VERSION);
    assert_eq!(r["meta"]["config"]["q"], 0.5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("selected 1 of 2"));
}

#[test]
fn report_round_trips() {
    let t = toy();
    let out = t.dir.path().join("report.json");
    assert!(cfscreen(&select_args(&t, &out, "0.5", "3")).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let parsed: conformal_screening::cli::ReportFile = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
    assert_eq!(text, again);
    assert_eq!(parsed.selected.len(), parsed.k_star);
}

#[test]
fn level_outside_unit_interval_exits_2() {
    let t = toy();
    let out = t.dir.path().join("report.json");
    let o = cfscreen(&select_args(&t, &out, "1.5", "1"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("q must be in (0,1)"));
    assert!(!out.exists());
}

#[test]
fn same_seed_same_bytes() {
    let t = toy();
    let a = t.dir.path().join("a.json");
    let b = t.dir.path().join("b.json");
    assert!(cfscreen(&select_args(&t, &a, "0.5", "17")).status.success());
    assert!(cfscreen(&select_args(&t, &b, "0.5", "17")).status.success());
    let (ra, rb) = (json(&a), json(&b));
    assert_eq!(ra["units"], rb["units"]);
    assert_eq!(ra["meta"]["config"]["seed"], 17);
}

#[test]
fn randomized_method_without_seed_exits_2() {
    let t = toy();
    let out = t.dir.path().join("r.json");
    let mut args = select_args(&t, &out, "0.5", "1");
    let k = args.iter().position(|a| *a == "--seed").unwrap();
    args.drain(k..k + 2);
    let o = cfscreen(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn input_errors_map_to_exit_codes() {
    let t = toy();
    let out = t.dir.path().join("r.json");

    let missing = t.dir.path().join("nope.csv");
    let mut args = select_args(&t, &out, "0.5", "1");
    args[2] = s(&missing);
    let o = cfscreen(&args);
    assert_eq!(o.status.code(), Some(3));

    let bad = write(t.dir.path(), "bad.csv", "mu,y\n0.1,0\n0.2,inf\n");
    let mut args = select_args(&t, &out, "0.5", "1");
    args[2] = s(&bad);
    let o = cfscreen(&args);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("row 2") && err.contains('y'), "{err}");

    let mut args = select_args(&t, &out, "0.5", "1");
    args[6] = "prediction";
    let o = cfscreen(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prediction"));
}

#[test]
fn deterministic_method_reports_metrics_and_ties() {
    let dir = tempfile::tempdir().unwrap();
    let calib = write(dir.path(), "c.csv", "mu,y\n0.1,0\n0.1,0\n0.8,1\n0.9,1\n0.3,-1\n");
    let test = write(dir.path(), "t.csv", "mu,y\n0.1,0\n0.95,2\n");
    let out = dir.path().join("r.json");
    let o = cfscreen(&[
        "select",
        "--calib",
        s(&calib),
        "--test",
        s(&test),
        "--pred",
        "mu",
        "--threshold-const",
        "0",
        "--score",
        "res",
        "--method",
        "dtm",
        "--q",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert!(r["metrics"].is_object());
    assert!(r["meta"]["tie_count"].as_u64().unwrap() > 0);
    assert!(r["meta"]["seed"].is_null());
}

#[test]
fn per_sample_and_group_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let calib = write(dir.path(), "c.csv", "mu,y,w,g\n1,2,1.5,a\n2,1,1.5,a\n3,5,4,b\n4,3,4,b\n");
    let test = write(dir.path(), "t.csv", "mu,w,g\n5.0,5.1,a\n6.5,6.0,b\n");
    let train = write(dir.path(), "train.csv", "g,y\na,1\na,2\na,3\nb,10\nb,20\n");
    let out = dir.path().join("r.json");
    let base = [
        "select",
        "--calib",
        s(&calib),
        "--test",
        s(&test),
        "--pred",
        "mu",
        "--score",
        "res",
        "--method",
        "dtm",
        "--q",
        "0.5",
    ];

    let mut args = base.to_vec();
    args.extend(["--threshold-col", "w", "--out", s(&out)]);
    assert!(cfscreen(&args).status.success());
    let c: Vec<f64> = json(&out)["units"]
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["c"].as_f64().unwrap())
        .collect();
    assert_eq!(c, vec![5.1, 6.0]);

    let mut args = base.to_vec();
    args.extend([
        "--group",
        "g",
        "--group-quantile",
        "0.5",
        "--train",
        s(&train),
        "--out",
        s(&out),
    ]);
    assert!(cfscreen(&args).status.success());
    let c: Vec<f64> = json(&out)["units"]
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["c"].as_f64().unwrap())
        .collect();
    assert_eq!(c, vec![2.0, 10.0]);
}

#[test]
fn simulate_grid_has_one_row_per_cell_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let plot = dir.path().join("p.csv");
    let o = cfscreen(&[
        "simulate",
        "--q",
        "0.1",
        "--reps",
        "50",
        "--n",
        "60",
        "--m",
        "40",
        "--seed",
        "1",
        "--out-csv",
        s(&csv),
        "--emit-plot-data",
        s(&plot),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "setting,score,q,sigma,n,m,N,fdr_mean,fdr_se,power_mean,power_se,nsel_mean"
    );
    assert_eq!(lines.count(), 24);
    assert_eq!(fs::read_to_string(&plot).unwrap().lines().count(), 1 + 24 * 3);
    assert!(!o.stderr.is_empty());

    let o = cfscreen(&[
        "simulate",
        "--setting",
        "1",
        "--sigma",
        "0.5,1.0",
        "--reps",
        "5",
        "--n",
        "30",
        "--m",
        "30",
        "--seed",
        "1",
    ]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 1 + 6);
}

#[test]
fn simulate_rejects_unknown_setting() {
    let o = cfscreen(&["simulate", "--setting", "9", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn asymptotics_on_generated_populations() {
    let o = cfscreen(&["asymptotics", "--generator", "mixture", "--q", "0.1", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let t = r["t_star"].as_f64().unwrap();
    assert!((t - 0.052_631_578_947).abs() < 0.005, "{t}");
    assert!((r["analytic_t_star"].as_f64().unwrap() - 0.1 * 0.5 / 0.95).abs() < 1e-15);

    let o = cfscreen(&["asymptotics", "--generator", "pure-null", "--q", "0.1", "--seed", "2"]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    // Sampling noise lets a handful of the smallest F values through.
    assert!(r["t_star"].as_f64().unwrap() < 1e-4);
    assert!(r["power_limit"].as_f64().unwrap() == 0.0);

    let o = cfscreen(&[
        "asymptotics",
        "--setting",
        "6",
        "--n-pop",
        "20000",
        "--q",
        "0.1",
        "--seed",
        "2",
    ]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["fdr_limit"].as_f64().unwrap() <= 0.1 + 2.0 / 20000f64.sqrt());
}

#[test]
fn asymptotics_reads_population_files() {
    let dir = tempfile::tempdir().unwrap();
    let pop = write(
        dir.path(),
        "pop.csv",
        "v_full,v_null,y_exceeds\n1,0,1\n2,0.5,1\n3,3,0\n4,4,0\n",
    );
    let out = dir.path().join("a.json");
    let o = cfscreen(&[
        "asymptotics",
        "--population",
        s(&pop),
        "--q",
        "0.5",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out)["n_pop"], 4);
}

#[test]
fn asymptotics_requires_q() {
    let o = cfscreen(&["asymptotics", "--generator", "mixture", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
