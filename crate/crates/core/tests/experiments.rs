use std::f64::consts::PI;

use onebit_core::analytics::{mse_pilots_gmm, noise_var_for_snr};
use onebit_core::cme::univariate_coefficient;
use onebit_core::harness::{figure_preset, run_experiment, write_results, ExperimentConfig, MonteCarloResult, SnrDb};
use onebit_core::EstimatorKind;

fn within(value: (f64, f64), target: f64) -> bool {
    (value.0 - target).abs() <= 3.0 * value.1
}

fn nmse(result: &MonteCarloResult, kind: EstimatorKind, m: usize, snr: f64) -> (f64, f64) {
    let row = result.find(kind.as_str(), m, snr).unwrap_or_else(|| panic!("no {kind} row at M={m}, {snr} dB"));
    (row.nmse, row.stderr)
}

#[test]
fn identical_configs_write_identical_files() {
    let mut config = figure_preset(2, false).unwrap();
    config.snr_db = vec![SnrDb(-10.0), SnrDb(10.0), SnrDb::NOISELESS];
    config.sample_count = 2000;
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_results(&run_experiment(&config).unwrap(), &a).unwrap();
    write_results(&run_experiment(&config).unwrap(), &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(text.lines().count(), 1 + 2 * 3);
}

#[test]
fn low_snr_univariate_cell_matches_coefficient_form() {
    let mut config = figure_preset(2, false).unwrap();
    config.snr_db = vec![SnrDb(-20.0)];
    config.estimators = vec![EstimatorKind::CmeUnivariate];
    let prior = config.prior.build().unwrap();
    let result = run_experiment(&config).unwrap();
    let coef = univariate_coefficient(&prior, noise_var_for_snr(-20.0, 1.0, 1)).unwrap();
    let want = 1.0 - 2.0 / PI * coef * coef;
    let got = nmse(&result, EstimatorKind::CmeUnivariate, 1, -20.0);
    assert!(within(got, want), "{got:?} vs {want}");
}

#[test]
fn sixteen_noiseless_pilots_match_closed_form() {
    let mut config = figure_preset(3, false).unwrap();
    config.m = vec![16];
    let prior = config.prior.build().unwrap();
    let result = run_experiment(&config).unwrap();
    let want = mse_pilots_gmm(&prior.scalar_stats().unwrap(), 16).unwrap();
    for kind in &config.estimators {
        let got = nmse(&result, *kind, 16, f64::INFINITY);
        assert!(within(got, want), "{kind}: {got:?} vs {want}");
    }
}

#[test]
fn conditional_mean_never_loses_to_lmmse() {
    let config = ExperimentConfig::from_json_str(
        r#"{"experiment": "optimality",
            "prior": {"kind": "scalar", "weights": [0.8, 0.2], "variances": [0.1, 10.0], "normalize": true},
            "n": 1, "m": [1, 3], "pilots": "optimal", "snr_db": [-10.0, 0.0, 10.0, 25.0],
            "estimators": ["cme_numeric", "lmmse_gmm"], "sample_count": 3000, "master_seed": 11}"#,
    )
    .unwrap();
    let result = run_experiment(&config).unwrap();
    for &m in &config.m {
        for s in config.snr_db.iter().map(|s| s.0) {
            let cme = nmse(&result, EstimatorKind::CmeNumeric, m, s);
            let lin = nmse(&result, EstimatorKind::LmmseGmm, m, s);
            assert!(cme.0 <= lin.0 + 3.0 * cme.1.hypot(lin.1), "M={m} {s} dB: {cme:?} vs {lin:?}");
        }
    }
}

#[test]
fn vector_prior_mixture_lmmse_leads_at_high_snr() {
    let mut config = figure_preset(1, true).unwrap();
    config.n = 4;
    config.m = vec![8];
    config.sample_count = 500;
    config.snr_db = vec![SnrDb(-10.0), SnrDb(30.0)];
    if let onebit_core::harness::PriorSpec::Random { dim, .. } = &mut config.prior {
        *dim = 4;
    }
    let result = run_experiment(&config).unwrap();
    assert!(result.rows.iter().all(|r| r.nmse.is_finite() && r.n == 4));
    let gmm = nmse(&result, EstimatorKind::LmmseGmm, 8, 30.0);
    let gauss = nmse(&result, EstimatorKind::LmmseGaussMismatched, 8, 30.0);
    assert!(gmm.0 < gauss.0, "{gmm:?} vs {gauss:?}");
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let base = figure_preset(2, false).unwrap();

    let mut few = base.clone();
    few.sample_count = 99;
    assert!(run_experiment(&few).is_err());

    let mut univariate_many = base.clone();
    univariate_many.m = vec![2];
    assert!(run_experiment(&univariate_many).is_err());

    assert!(ExperimentConfig::from_json_str(r#"{"experiment": "x", "unknown_key": 1}"#).is_err());
}
