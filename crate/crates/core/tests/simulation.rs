//! Monte Carlo checks of the FDR guarantees and of the simulation harness.

use conformal_screening::sim::{
    exchangeable_experiment, generate, monte_carlo, DgpSetting, ExchangeableConfig, McConfig, OutcomeEncoding, Predictor,
    SimScore,
};

fn run(setting: DgpSetting, q: f64, reps: usize, seed: u64) -> conformal_screening::sim::McReport {
    let mut cfg = McConfig::new(setting, q, seed);
    cfg.reps = reps;
    monte_carlo(&cfg).unwrap()
}

#[test]
fn fdr_is_controlled_on_every_setting_score_and_level() {
    let mut failures = Vec::new();
    for id in 1..=8 {
        for (k, q) in [0.1, 0.2, 0.5].into_iter().enumerate() {
            let report = run(DgpSetting::new(id, 1.0).unwrap(), q, 500, 1000 + 10 * id as u64 + k as u64);
            for row in &report.rows {
                let bound = q + 3.0 * row.fdr_se;
                if row.fdr_mean > bound {
                    failures.push(format!(
                        "setting {id} {} q={q}: {:.4} > {:.4}",
                        row.score, row.fdr_mean, bound
                    ));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn pure_null_population_selects_almost_nothing() {
    let report = run(DgpSetting::constant_mean(-5.0, 1.0).unwrap(), 0.1, 500, 3);
    for row in &report.rows {
        assert!(row.fdr_mean <= 0.1 + 3.0 * row.fdr_se, "{row:?}");
        // BH under the global null selects anything with probability about q.
        assert!(row.nsel_mean < 1.0, "{row:?}");
    }
}

#[test]
fn clipped_score_is_at_least_as_powerful_as_residual() {
    let report = run(DgpSetting::new(1, 1.0).unwrap(), 0.1, 500, 5);
    let clip = report.row(SimScore::Clip).unwrap().power_mean;
    let res = report.row(SimScore::Res).unwrap().power_mean;
    assert!(clip >= res - 0.01, "clip {clip} < res {res}");
}

// More noise, fewer and safer selections in settings 5-7. The decrease is
// checked on the clipped score, whose FDR sits closest to the target.
#[test]
fn fdr_does_not_grow_with_noise_in_settings_5_to_7() {
    let sigmas = [0.5, 1.0, 2.0, 4.0];
    for id in 5..=7 {
        let rows: Vec<_> = sigmas
            .iter()
            .map(|&s| {
                run(DgpSetting::new(id, s).unwrap(), 0.1, 500, 40 + id as u64)
                    .row(SimScore::Clip)
                    .unwrap()
                    .clone()
            })
            .collect();
        for w in rows.windows(2) {
            let slack = 2.0 * (w[0].fdr_se.powi(2) + w[1].fdr_se.powi(2)).sqrt();
            assert!(
                w[1].fdr_mean <= w[0].fdr_mean + slack,
                "setting {id}: sigma {} -> {}: fdr {:.4} -> {:.4}",
                w[0].sigma,
                w[1].sigma,
                w[0].fdr_mean,
                w[1].fdr_mean
            );
        }
    }
}

#[test]
fn knn_predictor_keeps_fdr_control() {
    let mut cfg = McConfig::new(DgpSetting::new(2, 1.0).unwrap(), 0.2, 8);
    cfg.predictor = Predictor::Knn { k: 20 };
    cfg.reps = 200;
    for row in monte_carlo(&cfg).unwrap().rows {
        assert!(row.fdr_mean <= 0.2 + 3.0 * row.fdr_se, "{row:?}");
        assert!(row.power_mean > 0.0);
    }
}

#[test]
fn reports_replay_exactly() {
    let setting = DgpSetting::new(4, 1.0).unwrap();
    assert_eq!(run(setting, 0.1, 30, 9), run(setting, 0.1, 30, 9));
    assert_ne!(run(setting, 0.1, 30, 9), run(setting, 0.1, 30, 10));
    assert_eq!(generate(&setting, 50, 2), generate(&setting, 50, 2));
}

#[test]
fn report_values_are_in_range() {
    for row in run(DgpSetting::new(3, 0.5).unwrap(), 0.3, 50, 4).rows {
        assert!((0.0..=1.0).contains(&row.fdr_mean) && (0.0..=1.0).contains(&row.power_mean));
        assert!(row.fdr_se >= 0.0 && row.power_se >= 0.0 && row.nsel_mean >= 0.0);
        assert_eq!(row.reps, 50);
    }
}

#[test]
fn finite_population_design_controls_fdr() {
    for score in [SimScore::Clip, SimScore::Res] {
        let mut cfg = ExchangeableConfig::new(DgpSetting::new(2, 1.0).unwrap(), 0.2, 12);
        cfg.score = score;
        let report = exchangeable_experiment(&cfg).unwrap();
        let row = &report.rows[0];
        assert!(row.fdr_mean <= 0.2 + 3.0 * row.fdr_se, "{row:?}");
        assert_eq!(report.tie_flagged_reps, 0);
    }
}

#[test]
fn single_test_unit_is_a_level_q_test() {
    let mut cfg = ExchangeableConfig::new(DgpSetting::new(6, 1.0).unwrap(), 0.2, 13);
    cfg.n_test = 1;
    cfg.reps = 2000;
    let row = exchangeable_experiment(&cfg).unwrap().rows[0].clone();
    // FDP is 1{selected and null}, so FDR = P(select, null).
    assert!(row.fdr_mean <= 0.2 + 3.0 * row.fdr_se, "{row:?}");
    assert!(row.nsel_mean <= 1.0);
}

#[test]
fn tied_population_is_flagged() {
    // Zero mean and zero noise: every score is identical.
    let mut cfg = ExchangeableConfig::new(DgpSetting::constant_mean(0.0, 0.0).unwrap(), 0.2, 14);
    cfg.reps = 5;
    let report = exchangeable_experiment(&cfg).unwrap();
    assert_eq!(report.tie_flagged_reps, 5);
}

#[test]
fn binary_encoding_only_changes_the_residual_score() {
    let mut cfg = McConfig::new(DgpSetting::new(2, 1.0).unwrap(), 0.1, 21);
    cfg.reps = 40;
    let binary = monte_carlo(&cfg).unwrap();
    cfg.encoding = OutcomeEncoding::Raw;
    let raw = monte_carlo(&cfg).unwrap();
    for s in [SimScore::Sub, SimScore::Clip] {
        assert_eq!(binary.row(s), raw.row(s));
    }
    assert_ne!(binary.row(SimScore::Res), raw.row(SimScore::Res));
}
