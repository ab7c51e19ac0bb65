//! Closed-form MSE and correlation expressions for scalar signals, SNR grid
//! helpers, and numerical checks of the Gaussian lower bound.

use std::f64::consts::PI;

use serde::Serialize;

use crate::cme::univariate_coefficient;
use crate::error::{Error, Result};
use crate::stats::{GmmPrior, ScalarGmmStats};

/// MSE of the scalar CME from a single noisy one-bit observation.
pub fn mse_univariate_gmm(prior: &GmmPrior, noise_var: f64) -> Result<f64> {
    let stats = prior.scalar_stats()?;
    let c = univariate_coefficient(prior, noise_var)?;
    Ok(stats.sigma_glob_sq - c * c)
}

/// MSE of the same estimator when the prior is Gaussian with variance
/// `sigma_glob_sq`.
pub fn mse_univariate_gauss(sigma_glob_sq: f64, noise_var: f64) -> f64 {
    let total = sigma_glob_sq + noise_var;
    if total <= 0.0 {
        return 0.0;
    }
    sigma_glob_sq - 2.0 / PI * sigma_glob_sq * sigma_glob_sq / total
}

/// Fraction of `σ̄²` recovered by `M` noiseless equidistant-phase pilots.
fn pilot_gain(m: usize) -> f64 {
    let mf = m as f64;
    4.0 * mf * mf / PI * (PI / (4.0 * mf)).sin().powi(2)
}

/// MSE of the noiseless pilot CME with `m` equidistant-phase pilots.
pub fn mse_pilots_gmm(stats: &ScalarGmmStats, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("at least one pilot is required".into()));
    }
    Ok(stats.sigma_glob_sq - pilot_gain(m) * stats.sigma_bar * stats.sigma_bar)
}

/// Limit of [`mse_pilots_gmm`] as the number of pilots grows.
pub fn mse_pilots_limit(stats: &ScalarGmmStats) -> f64 {
    stats.sigma_glob_sq - PI / 4.0 * stats.sigma_bar * stats.sigma_bar
}

/// `E[h q*]` for `r = Q(h + n)`; real because every term is.
pub fn corr_hq_scalar(prior: &GmmPrior, noise_var: f64) -> Result<f64> {
    let stats = prior.scalar_stats()?;
    let vars = prior.component_variances()?;
    let global_total = stats.sigma_glob_sq + noise_var;
    let sum: f64 = prior
        .weights()
        .iter()
        .zip(&vars)
        .map(|(p, v)| {
            let s = (v + noise_var).sqrt();
            let own = if s > 0.0 { v / s } else { 0.0 };
            let coupled = if global_total > 0.0 { stats.sigma_glob_sq * s / global_total } else { 0.0 };
            p * (own - coupled)
        })
        .sum();
    Ok((2.0 / PI).sqrt() * sum)
}

/// `η² = tr(C_h) / (N·10^{snr/10})`; an infinite SNR gives `η² = 0`.
pub fn noise_var_for_snr(snr_db: f64, trace: f64, n: usize) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    trace / (n as f64 * 10f64.powf(snr_db / 10.0))
}

/// Inclusive SNR points `start, start + step, …` up to `stop`.
pub fn snr_points(start_db: f64, stop_db: f64, step_db: f64) -> Result<Vec<f64>> {
    if !(step_db > 0.0) || !start_db.is_finite() || !stop_db.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid SNR range {start_db}:{stop_db}:{step_db}")));
    }
    let count = ((stop_db - start_db) / step_db + 1e-9).floor();
    if count < 0.0 {
        return Err(Error::InvalidArgument(format!("empty SNR range {start_db}:{stop_db}:{step_db}")));
    }
    Ok((0..=count as usize).map(|i| start_db + i as f64 * step_db).collect())
}

/// Noise variances for an inclusive SNR range.
pub fn snr_grid(start_db: f64, stop_db: f64, step_db: f64, trace: f64, n: usize) -> Result<Vec<f64>> {
    Ok(snr_points(start_db, stop_db, step_db)?.into_iter().map(|s| noise_var_for_snr(s, trace, n)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseCurve {
    pub label: String,
    /// `(snr_db, mse)` pairs.
    pub grid: Vec<(f64, f64)>,
}

/// Univariate MSE curves (mixture and Gaussian of equal power) and the
/// correlation `E[h q*]` over `snr_db`, plus the pilot curves for `1..=max_pilots`
/// noiseless observations when requested. Pilot curves use the pilot count in
/// place of the SNR column.
pub fn analytic_curves(prior: &GmmPrior, snr_db: &[f64], max_pilots: Option<usize>) -> Result<Vec<MseCurve>> {
    let stats = prior.scalar_stats()?;
    let trace = stats.sigma_glob_sq;
    let mut gmm = Vec::with_capacity(snr_db.len());
    let mut gauss = Vec::with_capacity(snr_db.len());
    let mut corr = Vec::with_capacity(snr_db.len());
    for &s in snr_db {
        let eta2 = noise_var_for_snr(s, trace, 1);
        gmm.push((s, mse_univariate_gmm(prior, eta2)?));
        gauss.push((s, mse_univariate_gauss(stats.sigma_glob_sq, eta2)));
        corr.push((s, corr_hq_scalar(prior, eta2)?));
    }
    let mut curves = vec![
        MseCurve { label: "mse_univariate_gmm".into(), grid: gmm },
        MseCurve { label: "mse_univariate_gauss".into(), grid: gauss },
        MseCurve { label: "corr_hq".into(), grid: corr },
    ];
    if let Some(max_m) = max_pilots {
        let gauss_stats = ScalarGmmStats { sigma_glob_sq: stats.sigma_glob_sq, sigma_bar: stats.sigma_glob_sq.sqrt() };
        let mut pilots_gmm = Vec::with_capacity(max_m);
        let mut pilots_gauss = Vec::with_capacity(max_m);
        for m in 1..=max_m {
            pilots_gmm.push((m as f64, mse_pilots_gmm(&stats, m)?));
            pilots_gauss.push((m as f64, mse_pilots_gmm(&gauss_stats, m)?));
        }
        curves.push(MseCurve { label: "mse_pilots_gmm".into(), grid: pilots_gmm });
        curves.push(MseCurve { label: "mse_pilots_gauss".into(), grid: pilots_gauss });
        curves
            .push(MseCurve { label: "mse_pilots_limit".into(), grid: vec![(f64::INFINITY, mse_pilots_limit(&stats))] });
    }
    Ok(curves)
}

/// Slack allowed for round-off when the two MSEs coincide.
pub const BOUND_TOLERANCE: f64 = 1e-12;

const CONCAVITY_STEP: f64 = 1e-4;
const CONCAVITY_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub noise_var: f64,
    pub mse_gauss: f64,
    pub mse_gmm: f64,
    /// `mse_gmm − mse_gauss`.
    pub margin: f64,
    /// Largest second central difference of `x/√(x+η²)` on the test range.
    pub max_second_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotBoundPoint {
    pub m: usize,
    pub mse_gauss: f64,
    pub mse_gmm: f64,
    pub margin: f64,
}

/// Per-point outcome of [`check_gaussian_bound`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub points: Vec<BoundPoint>,
    pub pilots: Vec<PilotBoundPoint>,
}

impl BoundReport {
    pub fn violations(&self) -> usize {
        self.points.iter().filter(|p| p.margin < -BOUND_TOLERANCE).count()
            + self.pilots.iter().filter(|p| p.margin < -BOUND_TOLERANCE).count()
    }

    pub fn concavity_failures(&self) -> usize {
        self.points.iter().filter(|p| !(p.max_second_difference < 0.0)).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0 && self.concavity_failures() == 0
    }

    pub fn min_margin(&self) -> f64 {
        self.points.iter().map(|p| p.margin).chain(self.pilots.iter().map(|p| p.margin)).fold(f64::INFINITY, f64::min)
    }
}

/// Largest `f(x+h) − 2f(x) + f(x−h)` for `f(x) = x/√(x+η²)` over log-spaced
/// `x ∈ [1e-3, 100]`.
pub fn max_second_difference(noise_var: f64) -> f64 {
    let f = |x: f64| x / (x + noise_var).sqrt();
    let (lo, hi) = (1e-3f64.ln(), 100f64.ln());
    (0..CONCAVITY_POINTS)
        .map(|i| {
            let x = (lo + (hi - lo) * i as f64 / (CONCAVITY_POINTS - 1) as f64).exp();
            f(x + CONCAVITY_STEP) - 2.0 * f(x) + f(x - CONCAVITY_STEP)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Checks that a Gaussian prior of the same power is never harder to estimate
/// from one-bit data: at each noise variance for a single observation, and for
/// `1..=max_pilots` noiseless pilots. Also records the numerical concavity of
/// `x/√(x+η²)` that the single-observation bound rests on.
pub fn check_gaussian_bound(prior: &GmmPrior, noise_vars: &[f64], max_pilots: usize) -> Result<BoundReport> {
    let stats = prior.scalar_stats()?;
    let mut points = Vec::with_capacity(noise_vars.len());
    for &eta2 in noise_vars {
        let mse_gauss = mse_univariate_gauss(stats.sigma_glob_sq, eta2);
        let mse_gmm = mse_univariate_gmm(prior, eta2)?;
        points.push(BoundPoint {
            noise_var: eta2,
            mse_gauss,
            mse_gmm,
            margin: mse_gmm - mse_gauss,
            max_second_difference: max_second_difference(eta2),
        });
    }
    let gauss_stats = ScalarGmmStats { sigma_glob_sq: stats.sigma_glob_sq, sigma_bar: stats.sigma_glob_sq.sqrt() };
    let mut pilots = Vec::with_capacity(max_pilots);
    for m in 1..=max_pilots {
        let mse_gauss = mse_pilots_gmm(&gauss_stats, m)?;
        let mse_gmm = mse_pilots_gmm(&stats, m)?;
        pilots.push(PilotBoundPoint { m, mse_gauss, mse_gmm, margin: mse_gmm - mse_gauss });
    }
    Ok(BoundReport { points, pilots })
}
