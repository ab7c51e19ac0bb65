//! Property checks behind the `verify` command: Monte-Carlo estimates against
//! closed forms, bound and ordering properties, and the orthant-probability
//! routine against its closed form.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analytics::{
    check_gaussian_bound, corr_hq_scalar, mse_pilots_gmm, mse_pilots_limit, mse_univariate_gmm, noise_var_for_snr,
    snr_grid,
};
use crate::bussgang::{bussgang_gain, cross_cov_hq, quantized_cov};
use crate::channel::{optimal_pilots, simulate, PilotKind, QuantizedObservation, SystemModel};
use crate::cme::{cme_pilots_linear, cme_pilots_phase, EstimatorKind};
use crate::error::{Error, Result};
use crate::harness::{figure_preset, mean_with_stderr, run_experiment, ExperimentConfig, MonteCarloResult, SnrDb};
use crate::linalg::{max_abs, CMatrix};
use crate::mvn::{bivariate_orthant, mvn_rectangle, RectangleProblem};
use crate::stats::{random_covariance, GmmPrior};

pub const CHECK_IDS: [&str; 10] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: String,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn two_component() -> GmmPrior {
    GmmPrior::scalar(&[0.8, 0.2], &[0.1, 10.0]).expect("static prior").normalized()
}

fn scalar_config(name: &str, m: Vec<usize>, snr: Vec<SnrDb>, kinds: Vec<EstimatorKind>, seed: u64) -> ExperimentConfig {
    let mut c = figure_preset(2, false).expect("preset");
    c.experiment = name.into();
    c.m = m;
    c.snr_db = snr;
    c.estimators = kinds;
    c.master_seed = seed;
    c
}

/// `|a − b| ≤ 3·√(se_a² + se_b²)`.
fn within_joint(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= 3.0 * a.1.hypot(b.1)
}

fn row(result: &MonteCarloResult, estimator: EstimatorKind, m: usize, snr: f64) -> Result<(f64, f64)> {
    result
        .find(estimator.as_str(), m, snr)
        .map(|r| (r.nmse, r.stderr))
        .ok_or_else(|| Error::Numerical(format!("missing row {estimator} M={m} {snr} dB")))
}

fn single_observation_mse(seed: u64) -> Result<(bool, String)> {
    let prior = two_component();
    let snrs = [-20.0, -10.0, 0.0, 10.0, 20.0, 30.0, 40.0];
    let config = scalar_config(
        "single",
        vec![1],
        snrs.iter().map(|&s| SnrDb(s)).collect(),
        vec![EstimatorKind::CmeUnivariate],
        seed,
    );
    let result = run_experiment(&config)?;
    let mut worst: f64 = 0.0;
    for &s in &snrs {
        let (v, se) = row(&result, EstimatorKind::CmeUnivariate, 1, s)?;
        let want = mse_univariate_gmm(&prior, noise_var_for_snr(s, 1.0, 1))?;
        worst = worst.max((v - want).abs() / se);
    }
    let noiseless = mse_univariate_gmm(&prior, 0.0)?;
    let passed = worst <= 3.0 && (noiseless - 0.7601).abs() <= 1e-4;
    Ok((passed, format!("max |MC − analytic|/stderr = {worst:.2}; noiseless MSE {noiseless:.7}")))
}

fn gaussian_bound(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = snr_grid(-20.0, 40.0, 5.0, 1.0, 1)?;
    let mut violations = 0;
    let mut concavity = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=5);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let v: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-3.0..2.0))).collect();
        let report = check_gaussian_bound(&GmmPrior::scalar(&w, &v)?.normalized(), &grid, 0)?;
        violations += report.violations();
        concavity += report.concavity_failures();
    }
    Ok((violations == 0 && concavity == 0, format!("{violations} bound violations, {concavity} concavity failures")))
}

fn pilot_form_equivalence() -> Result<(bool, String)> {
    let prior = two_component();
    let mut failures = Vec::new();
    for m in 1..=3 {
        let pilots = optimal_pilots(m);
        let mut bad = 0;
        for r in QuantizedObservation::enumerate(m) {
            let lin = cme_pilots_linear(&prior, &pilots, &r)?;
            let ph = cme_pilots_phase(&prior, m, &r)?.value;
            if (lin - ph).norm() > 1e-9 * ph.norm() {
                bad += 1;
            }
        }
        failures.push(format!("M={m}: {bad}/{} patterns differ", 4usize.pow(m as u32)));
    }
    let passed = failures.iter().all(|f| f.contains(": 0/"));
    Ok((passed, failures.join("; ")))
}

fn pilot_mse(seed: u64) -> Result<(bool, String)> {
    let prior = two_component();
    let stats = prior.scalar_stats()?;
    let ms = vec![1, 2, 4, 8, 16];
    let config =
        scalar_config("pilots", ms.clone(), vec![SnrDb::NOISELESS], vec![EstimatorKind::CmePilotsLinear], seed);
    let result = run_experiment(&config)?;
    let mut worst: f64 = 0.0;
    for &m in &ms {
        let (v, se) = row(&result, EstimatorKind::CmePilotsLinear, m, f64::INFINITY)?;
        worst = worst.max((v - mse_pilots_gmm(&stats, m)?).abs() / se);
    }
    let limit = mse_pilots_limit(&stats);
    let gap = (mse_pilots_gmm(&stats, 4096)? - limit).abs();
    let unit = GmmPrior::scalar(&[1.0], &[1.0])?.scalar_stats()?;
    let unit_limit = mse_pilots_limit(&unit);
    let passed = worst <= 3.0 && gap <= 1e-6 && (limit - 0.70395).abs() <= 1e-4 && (unit_limit - 0.2146).abs() <= 1e-4;
    Ok((
        passed,
        format!("max z = {worst:.2}; |M=4096 − limit| = {gap:.1e}; limit {limit:.7}; Gaussian limit {unit_limit:.4}"),
    ))
}

fn arcsine_law(seed: u64) -> Result<(bool, String)> {
    let prior = GmmPrior::new(
        vec![0.8, 0.2],
        vec![random_covariance(2, 0.1, seed)?, random_covariance(2, 10.0, seed.wrapping_add(1))?],
    )?;
    let system = SystemModel::new(optimal_pilots(1), 0.5, 2)?;
    let c_r = quantized_cov(&prior, &system)?;
    let gain = bussgang_gain(&prior, &system)?;
    let obs = simulate(&prior, &system, 100_000, seed.wrapping_add(2))?;
    let n = obs.len() as f64;
    let mut emp = CMatrix::zeros(2, 2);
    for o in &obs {
        emp += o.r.bits() * o.r.bits().adjoint();
    }
    emp /= num_complex::Complex64::new(n, 0.0);
    let cov_gap = max_abs(&(emp - &c_r));

    let mut worst_z: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let (mut re, mut im) = (Vec::with_capacity(obs.len()), Vec::with_capacity(obs.len()));
            for o in &obs {
                let q = o.r.bits() - &gain * &o.y;
                let v = q[i] * o.y[j].conj();
                re.push(v.re);
                im.push(v.im);
            }
            for part in [re, im] {
                let (mean, se) = mean_with_stderr(&part);
                worst_z = worst_z.max(mean.abs() / se);
            }
        }
    }

    let gauss = GmmPrior::gaussian(random_covariance(3, 1.0, seed.wrapping_add(3))?);
    let wide = SystemModel::new(optimal_pilots(2), 0.4, 3)?;
    let b = bussgang_gain(&gauss, &wide)?;
    let off_diag = (0..b.nrows())
        .flat_map(|i| (0..b.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| b[ij].norm())
        .fold(0.0, f64::max);
    let c_hq = max_abs(&cross_cov_hq(&gauss, &wide)?);
    let passed = cov_gap <= 0.01 && worst_z <= 3.0 && off_diag <= 1e-12 && c_hq <= 1e-12;
    Ok((
        passed,
        format!("max |Ĉ_r − C_r| = {cov_gap:.4}; max z(E[q y^H]) = {worst_z:.2}; Gaussian gain off-diagonal {off_diag:.1e}, |C_hq| {c_hq:.1e}"),
    ))
}

fn noise_correlation(seed: u64) -> Result<(bool, String)> {
    let prior = two_component();
    let mut worst: f64 = 0.0;
    for (i, &s) in [-10.0, 0.0, 10.0, 30.0].iter().enumerate() {
        let eta2 = noise_var_for_snr(s, 1.0, 1);
        let system = SystemModel::new(optimal_pilots(1), eta2, 1)?;
        let b = bussgang_gain(&prior, &system)?[(0, 0)];
        let obs = simulate(&prior, &system, 100_000, seed.wrapping_add(i as u64))?;
        let x: Vec<f64> = obs.iter().map(|o| (o.h[0] * (o.r.bits()[0] - b * o.y[0]).conj()).re).collect();
        let (mean, se) = mean_with_stderr(&x);
        worst = worst.max((mean - corr_hq_scalar(&prior, eta2)?).abs() / se);
    }
    let at_0db = corr_hq_scalar(&prior, 1.0)?;
    let low = corr_hq_scalar(&prior, 1e-9)?.abs();
    let high = corr_hq_scalar(&prior, 1e9)?.abs();
    let passed = worst <= 3.0 && (at_0db + 0.1707).abs() <= 5e-5 && low <= 1e-4 && high <= 1e-4;
    Ok((passed, format!("max z = {worst:.2}; E[hq*] at 0 dB {at_0db:.4}; limits {low:.1e}, {high:.1e}")))
}

fn lmmse_ordering(seed: u64) -> Result<(bool, String)> {
    let mut config = figure_preset(1, true)?;
    config.master_seed = seed;
    let result = run_experiment(&config)?;
    let mut bad = Vec::new();
    for &m in &config.m {
        for s in &config.snr_db {
            let gmm = row(&result, EstimatorKind::LmmseGmm, m, s.0)?;
            let gauss = row(&result, EstimatorKind::LmmseGaussMismatched, m, s.0)?;
            let ok = if s.0 >= 0.0 {
                gmm.0 <= gauss.0 + 3.0 * gmm.1.hypot(gauss.1)
            } else if s.0 == -20.0 {
                within_joint(gmm, gauss)
            } else {
                true
            };
            if !ok {
                bad.push(format!("M={m} {} dB", s.0));
            }
        }
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() { "all cells ordered".into() } else { format!("violations: {}", bad.join(", ")) },
    ))
}

fn noisy_pilots_below_limit(seed: u64) -> Result<(bool, String)> {
    let prior = two_component();
    let stats = prior.scalar_stats()?;
    let snrs: Vec<SnrDb> = [0.0, 5.0, 10.0, 15.0, 20.0].iter().map(|&s| SnrDb(s)).collect();
    let config = scalar_config("noisy", vec![10], snrs.clone(), vec![EstimatorKind::CmeNumeric], seed);
    let result = run_experiment(&config)?;
    let best = snrs
        .iter()
        .map(|s| row(&result, EstimatorKind::CmeNumeric, 10, s.0).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let threshold = 0.70395f64.min(mse_pilots_limit(&stats));
    let bound = check_gaussian_bound(&prior, &[], 64)?;
    let passed = best < threshold && bound.violations() == 0;
    Ok((passed, format!("min NMSE {best:.4} vs limit {threshold:.5}; pilot bound violations {}", bound.violations())))
}

fn orthant_probabilities(seed: u64) -> Result<(bool, String)> {
    let mut worst_closed: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for i in -9..=9 {
        let rho = i as f64 / 10.0;
        let closed = (PI - rho.acos()) / (2.0 * PI);
        worst_closed = worst_closed.max((bivariate_orthant(rho) - closed).abs());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let problem = RectangleProblem {
            cov,
            lower: DVector::zeros(2),
            upper: DVector::from_element(2, f64::INFINITY),
            samples: 1 << 14,
            seed: seed.wrapping_add(i as u64),
        };
        let (p, err) = mvn_rectangle(&problem)?;
        worst_z = worst_z.max((p - bivariate_orthant(rho)).abs() / err.max(f64::MIN_POSITIVE));
    }
    let mut worst_err: f64 = 0.0;
    for d in 2..=4 {
        let cov = random_covariance(d, 1.0, seed.wrapping_add(100 + d as u64))?.matrix().map(|z| z.re);
        let problem = RectangleProblem {
            cov,
            lower: DVector::from_element(d, -0.5),
            upper: DVector::from_element(d, 1.0),
            samples: 1 << 14,
            seed,
        };
        worst_err = worst_err.max(mvn_rectangle(&problem)?.1);
    }
    let passed = worst_closed <= 1e-10 && worst_z <= 1.0 && worst_err <= 1e-3;
    Ok((passed, format!("closed-form gap {worst_closed:.1e}; max |QMC − exact|/error {worst_z:.2}; max error estimate {worst_err:.1e}")))
}

fn pilot_design_ordering(seed: u64) -> Result<(bool, String)> {
    let mut config = scalar_config(
        "design",
        vec![2, 5, 10],
        [10.0, 20.0, 30.0].iter().map(|&s| SnrDb(s)).collect(),
        vec![EstimatorKind::CmeNumeric],
        seed,
    );
    config.pilots = crate::harness::PilotSelection::Many(vec![PilotKind::Optimal, PilotKind::Ones]);
    let result = run_experiment(&config)?;
    let mut bad = Vec::new();
    for &m in &config.m {
        for s in &config.snr_db {
            let pick = |label: &str| {
                result
                    .rows
                    .iter()
                    .find(|r| r.experiment == label && r.m == m && r.snr_db == s.0)
                    .map(|r| (r.nmse, r.stderr))
                    .ok_or_else(|| Error::Numerical(format!("missing {label} row")))
            };
            let opt = pick("design/optimal")?;
            let ones = pick("design/ones")?;
            if opt.0 > ones.0 + 3.0 * opt.1.hypot(ones.1) {
                bad.push(format!("M={m} {} dB", s.0));
            }
        }
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() { "optimal pilots never worse".into() } else { format!("violations: {}", bad.join(", ")) },
    ))
}

fn title(id: &str) -> &'static str {
    match id {
        "A1" => "single-observation CME: Monte Carlo vs closed-form MSE",
        "A2" => "Gaussian prior bound and concavity",
        "A3" => "pilot CME: linear and phase forms over all patterns",
        "A4" => "noiseless pilot CME MSE and its limit",
        "A5" => "arcsine law and Bussgang decorrelation",
        "A6" => "signal/quantization-noise correlation",
        "A7" => "GMM vs mismatched Gaussian LMMSE ordering",
        "A8" => "noisy pilots beat the noiseless limit",
        "A9" => "orthant probabilities",
        "A10" => "equidistant vs all-ones pilots",
        _ => "unknown",
    }
}

/// Runs one check. Errors inside the check are reported as a failure.
pub fn run_check(id: &str, seed: u64) -> Result<CheckOutcome> {
    let start = Instant::now();
    let outcome = match id {
        "A1" => single_observation_mse(seed),
        "A2" => gaussian_bound(seed),
        "A3" => pilot_form_equivalence(),
        "A4" => pilot_mse(seed),
        "A5" => arcsine_law(seed),
        "A6" => noise_correlation(seed),
        "A7" => lmmse_ordering(seed),
        "A8" => noisy_pilots_below_limit(seed),
        "A9" => orthant_probabilities(seed),
        "A10" => pilot_design_ordering(seed),
        other => return Err(Error::InvalidArgument(format!("unknown check `{other}`"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CheckOutcome { id: id.to_string(), title: title(id), passed, detail, seconds: start.elapsed().as_secs_f64() })
}
