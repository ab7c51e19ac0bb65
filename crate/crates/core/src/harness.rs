//! Seeded Monte-Carlo experiments over (pilots, estimator, M, SNR) grids,
//! NMSE aggregation, figure presets and the CSV result format.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::analytics::{noise_var_for_snr, snr_points};
use crate::bussgang::bussgang_gain;
use crate::channel::{simulate, PilotKind, SystemModel};
use crate::cme::{EstimatorKind, EstimatorSpec, DEFAULT_QUAD_ORDER};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::stats::{random_covariance, CovarianceMatrix, GmmPrior};

pub const MIN_SAMPLES: usize = 100;
/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "ONEBIT_THREADS";
pub const CSV_HEADER: &str = "experiment,estimator,N,M,snr_db,nmse,stderr,n_samples,seed";
/// Estimator column for rows of the correlation metric.
pub const CORR_LABEL: &str = "corr_hq";

/// An SNR in dB; `inf` denotes the noiseless system.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub const NOISELESS: SnrDb = SnrDb(f64::INFINITY);
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_float(self.0))
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(SnrDb(x)),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(SnrDb::NOISELESS),
            Raw::Text(t) => {
                t.parse::<f64>().map(SnrDb).map_err(|_| serde::de::Error::custom(format!("invalid SNR `{t}`")))
            }
        }
    }
}

/// Prior description as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Scalar mixture given by weights and variances.
    Scalar {
        weights: Vec<f64>,
        variances: Vec<f64>,
        #[serde(default)]
        normalize: bool,
    },
    /// `dim`-dimensional mixture whose component `k` is a random covariance
    /// with trace `scales[k]·dim`.
    Random {
        dim: usize,
        weights: Vec<f64>,
        scales: Vec<f64>,
        seed: u64,
        #[serde(default)]
        normalize: bool,
    },
}

impl PriorSpec {
    /// Two components, weights (0.8, 0.2), variances (0.1, 10), unit power.
    pub fn two_component_scalar() -> Self {
        PriorSpec::Scalar { weights: vec![0.8, 0.2], variances: vec![0.1, 10.0], normalize: true }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Scalar { .. } => 1,
            PriorSpec::Random { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<GmmPrior> {
        let (prior, normalize) = match self {
            PriorSpec::Scalar { weights, variances, normalize } => (GmmPrior::scalar(weights, variances)?, *normalize),
            PriorSpec::Random { dim, weights, scales, seed, normalize } => {
                if weights.len() != scales.len() {
                    return Err(Error::Config(format!(
                        "{} weights but {} covariance scales",
                        weights.len(),
                        scales.len()
                    )));
                }
                let covs = scales
                    .iter()
                    .enumerate()
                    .map(|(k, &scale)| random_covariance(*dim, scale, child_seed(*seed, "covariance", k, 0)))
                    .collect::<Result<Vec<CovarianceMatrix>>>()?;
                (GmmPrior::new(weights.clone(), covs)?, *normalize)
            }
        };
        Ok(if normalize { prior.normalized() } else { prior })
    }

    /// Parses the command-line form: `default`, a JSON object, or
    /// comma-separated `weight:variance` pairs (scalar, normalized).
    pub fn parse_cli(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "default" {
            return Ok(Self::two_component_scalar());
        }
        if text.starts_with('{') {
            return Ok(serde_json::from_str(text)?);
        }
        let mut weights = Vec::new();
        let mut variances = Vec::new();
        for pair in text.split(',') {
            let (w, v) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("expected `weight:variance`, got `{pair}`")))?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Config(format!("invalid number `{s}`")));
            weights.push(parse(w)?);
            variances.push(parse(v)?);
        }
        Ok(PriorSpec::Scalar { weights, variances, normalize: true })
    }
}

/// One pilot kind or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PilotSelection {
    One(PilotKind),
    Many(Vec<PilotKind>),
}

impl Default for PilotSelection {
    fn default() -> Self {
        PilotSelection::One(PilotKind::Optimal)
    }
}

impl PilotSelection {
    pub fn kinds(&self) -> Vec<PilotKind> {
        match self {
            PilotSelection::One(k) => vec![*k],
            PilotSelection::Many(ks) => ks.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `Σ‖h − ĥ‖² / Σ‖h‖²` per estimator.
    #[default]
    Nmse,
    /// `Re E[h q*]` with `q = r − B y`; needs `N = M = 1`.
    CorrHq,
}

fn default_quad_order() -> usize {
    DEFAULT_QUAD_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub prior: PriorSpec,
    pub n: usize,
    pub m: Vec<usize>,
    #[serde(default)]
    pub pilots: PilotSelection,
    pub snr_db: Vec<SnrDb>,
    #[serde(default)]
    pub estimators: Vec<EstimatorKind>,
    pub sample_count: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Structural checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.experiment.is_empty() || self.experiment.contains([',', '"', '\n', '\r']) {
            return bad(format!("experiment name `{}` must be non-empty and CSV-safe", self.experiment));
        }
        if self.sample_count < MIN_SAMPLES {
            return bad(format!("sample_count must be >= {MIN_SAMPLES}, got {}", self.sample_count));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.prior.dim() != self.n {
            return bad(format!("prior dimension {} does not match n = {}", self.prior.dim(), self.n));
        }
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("m must be a non-empty list of positive counts".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| s.0.is_nan() || s.0 == f64::NEG_INFINITY) {
            return bad("snr_db must be a non-empty list of numbers or \"inf\"".into());
        }
        if self.pilots.kinds().is_empty() {
            return bad("pilots must name at least one pilot kind".into());
        }
        match self.metric {
            Metric::Nmse if self.estimators.is_empty() => bad("estimators must not be empty".into()),
            Metric::CorrHq if self.n != 1 || self.m.iter().any(|&m| m != 1) => {
                bad("the corr_hq metric needs n = 1 and m = [1]".into())
            }
            _ => Ok(()),
        }
    }

    fn series_label(&self, pilot: PilotKind) -> String {
        if self.pilots.kinds().len() > 1 {
            format!("{}/{}", self.experiment, pilot)
        } else {
            self.experiment.clone()
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub experiment: String,
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    pub nmse: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub rows: Vec<MonteCarloRow>,
}

impl MonteCarloResult {
    pub fn find(&self, estimator: &str, m: usize, snr_db: f64) -> Option<&MonteCarloRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.m == m && r.snr_db == snr_db)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.experiment,
                r.estimator,
                r.n,
                r.m,
                format_float(r.snr_db),
                format_float(r.nmse),
                format_float(r.stderr),
                r.n_samples,
                r.seed
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Config("missing or unexpected CSV header".into()));
        }
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 9 {
                    return Err(Error::Config(format!("expected 9 fields, got {}: `{line}`", f.len())));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("invalid number `{s}`")));
                let int = |s: &str| s.parse::<u64>().map_err(|_| Error::Config(format!("invalid integer `{s}`")));
                Ok(MonteCarloRow {
                    experiment: f[0].to_string(),
                    estimator: f[1].to_string(),
                    n: int(f[2])? as usize,
                    m: int(f[3])? as usize,
                    snr_db: num(f[4])?,
                    nmse: num(f[5])?,
                    stderr: num(f[6])?,
                    n_samples: int(f[7])? as usize,
                    seed: int(f[8])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Writes `result` as CSV (LF line endings, 9 significant digits).
pub fn write_results(result: &MonteCarloResult, path: &Path) -> Result<()> {
    fs::write(path, result.to_csv())?;
    Ok(())
}

/// C-style `%.9g`, with `inf`/`-inf`/`nan` for non-finite values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    const PRECISION: i32 = 9;
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Seed for one grid cell, from a SHA-256 digest of its coordinates.
pub fn child_seed(master_seed: u64, label: &str, m: usize, snr_index: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update((m as u64).to_le_bytes());
    hasher.update((snr_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `Σ‖h − ĥ‖² / Σ‖h‖²` and its delta-method standard error.
pub fn nmse(truths: &[CVector], estimates: &[CVector]) -> Result<(f64, f64)> {
    if truths.len() != estimates.len() {
        return Err(Error::Dimension(format!("{} truths vs {} estimates", truths.len(), estimates.len())));
    }
    if truths.len() < 2 {
        return Err(Error::InvalidArgument("nmse needs at least two samples".into()));
    }
    let errors: Vec<f64> = truths.iter().zip(estimates).map(|(h, e)| (h - e).norm_squared()).collect();
    let powers: Vec<f64> = truths.iter().map(|h| h.norm_squared()).collect();
    ratio_of_means(&errors, &powers)
}

/// `mean(a)/mean(b)` with the first-order (delta-method) standard error.
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    if !(mean_b > 0.0) {
        return Err(Error::Numerical("zero signal power in NMSE denominator".into()));
    }
    let ratio = mean_a / mean_b;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    let denom = n - 1.0;
    let (var_a, var_b, cov) = (var_a / denom, var_b / denom, cov / denom);
    let var_ratio = (var_a - 2.0 * ratio * cov + ratio * ratio * var_b) / (mean_b * mean_b * n);
    Ok((ratio, var_ratio.max(0.0).sqrt()))
}

/// Sample mean and its standard error.
pub fn mean_with_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone)]
struct Cell {
    pilot: PilotKind,
    estimator: Option<EstimatorKind>,
    m: usize,
    snr_index: usize,
    snr_db: f64,
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let estimators: Vec<Option<EstimatorKind>> = match config.metric {
        Metric::Nmse => config.estimators.iter().copied().map(Some).collect(),
        Metric::CorrHq => vec![None],
    };
    let mut out = Vec::new();
    for pilot in config.pilots.kinds() {
        for &estimator in &estimators {
            for &m in &config.m {
                for (snr_index, snr) in config.snr_db.iter().enumerate() {
                    out.push(Cell { pilot, estimator, m, snr_index, snr_db: snr.0 });
                }
            }
        }
    }
    out
}

fn cell_system(config: &ExperimentConfig, prior: &GmmPrior, cell: &Cell) -> Result<SystemModel> {
    let noise_var = noise_var_for_snr(cell.snr_db, prior.global_cov().trace(), config.n);
    SystemModel::new(cell.pilot.pilots(cell.m), noise_var, config.n)
}

fn estimator_spec(
    config: &ExperimentConfig,
    prior: &GmmPrior,
    system: SystemModel,
    kind: EstimatorKind,
) -> EstimatorSpec {
    EstimatorSpec::new(kind, prior.clone(), system).with_quad_order(config.quad_order)
}

fn run_cell(config: &ExperimentConfig, prior: &GmmPrior, cell: &Cell) -> Result<MonteCarloRow> {
    let system = cell_system(config, prior, cell)?;
    let label = cell.estimator.map_or(CORR_LABEL, EstimatorKind::as_str);
    let seed = child_seed(config.master_seed, label, cell.m, cell.snr_index);
    let observations = simulate(prior, &system, config.sample_count, seed)?;

    let (value, stderr) = match cell.estimator {
        Some(kind) => {
            let estimator = estimator_spec(config, prior, system, kind).build()?;
            let mut cache: HashMap<Vec<u8>, CVector> = HashMap::new();
            let mut truths = Vec::with_capacity(observations.len());
            let mut estimates = Vec::with_capacity(observations.len());
            for obs in observations {
                let estimate = if kind.benefits_from_cache() {
                    match cache.get(&obs.r.key()) {
                        Some(e) => e.clone(),
                        None => {
                            let e = estimator.estimate(&obs.r)?;
                            cache.insert(obs.r.key(), e.clone());
                            e
                        }
                    }
                } else {
                    estimator.estimate(&obs.r)?
                };
                truths.push(obs.h);
                estimates.push(estimate);
            }
            nmse(&truths, &estimates)?
        }
        None => {
            let gain = bussgang_gain(prior, &system)?[(0, 0)];
            let products: Vec<f64> = observations
                .iter()
                .map(|o| {
                    let q: Complex64 = o.r.bits()[0] - gain * o.y[0];
                    (o.h[0] * q.conj()).re
                })
                .collect();
            mean_with_stderr(&products)
        }
    };
    if !value.is_finite() || !stderr.is_finite() {
        return Err(Error::Numerical(format!("non-finite result for {label}, M = {}, SNR {}", cell.m, cell.snr_db)));
    }
    Ok(MonteCarloRow {
        experiment: config.series_label(cell.pilot),
        estimator: label.to_string(),
        n: config.n,
        m: cell.m,
        snr_db: cell.snr_db,
        nmse: value,
        stderr,
        n_samples: config.sample_count,
        seed,
    })
}

fn worker_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs every grid cell (in parallel) and returns rows in grid order:
/// pilot kind, estimator, M, SNR.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let prior = config.prior.build()?;
    let grid = cells(config);
    for cell in &grid {
        let system = cell_system(config, &prior, cell)?;
        if let Some(kind) = cell.estimator {
            estimator_spec(config, &prior, system, kind).check_applicable()?;
        }
    }
    let run = || grid.par_iter().map(|cell| run_cell(config, &prior, cell)).collect::<Result<Vec<_>>>();
    let rows = match worker_count()? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(MonteCarloResult { rows })
}

/// SNR axis of the presets: −20 to 40 dB in 5 dB steps.
pub fn preset_snr_grid() -> Vec<SnrDb> {
    snr_points(-20.0, 40.0, 5.0).expect("static range").into_iter().map(SnrDb).collect()
}

/// Experiment configurations for figures 1–6. `small` shrinks figure 1 to
/// `N = 16` and 2,000 samples.
pub fn figure_preset(id: u32, small: bool) -> Result<ExperimentConfig> {
    let scalar = PriorSpec::two_component_scalar();
    let base = |experiment: &str, prior: PriorSpec, n: usize, m: Vec<usize>, estimators: Vec<EstimatorKind>| {
        ExperimentConfig {
            experiment: experiment.into(),
            prior,
            n,
            m,
            pilots: PilotSelection::default(),
            snr_db: preset_snr_grid(),
            estimators,
            sample_count: 10_000,
            master_seed: 2024,
            output: None,
            metric: Metric::Nmse,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    };
    use EstimatorKind::*;
    let config = match id {
        1 => {
            let n = if small { 16 } else { 64 };
            let prior = PriorSpec::Random {
                dim: n,
                weights: vec![0.8, 0.2],
                scales: vec![0.1, 10.0],
                seed: 1,
                normalize: true,
            };
            let mut c = base("fig1", prior, n, vec![1, 8, 16, 32], vec![LmmseGmm, LmmseGaussMismatched]);
            if small {
                c.sample_count = 2_000;
            }
            c
        }
        2 => base("fig2", scalar, 1, vec![1], vec![CmeUnivariate, CmeGaussMismatched]),
        3 => {
            let mut c = base("fig3", scalar, 1, (1..=16).collect(), vec![CmePilotsLinear, CmePilotsPhase]);
            c.snr_db = vec![SnrDb::NOISELESS];
            c
        }
        4 => base("fig4", scalar, 1, vec![1, 5, 10], vec![CmeNumeric, CmeGaussMismatched]),
        5 => {
            let mut c = base("fig5", scalar, 1, vec![1], Vec::new());
            c.metric = Metric::CorrHq;
            c
        }
        6 => {
            let mut c = base("fig6", scalar, 1, vec![1, 2, 5, 10], vec![CmeNumeric]);
            c.pilots = PilotSelection::Many(vec![PilotKind::Optimal, PilotKind::Ones]);
            c
        }
        other => return Err(Error::InvalidArgument(format!("unknown figure id {other} (expected 1..6)"))),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{mse_pilots_gmm, mse_univariate_gmm};

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            experiment: "unit".into(),
            prior: PriorSpec::two_component_scalar(),
            n: 1,
            m: vec![1],
            pilots: PilotSelection::default(),
            snr_db: vec![SnrDb(0.0), SnrDb(10.0)],
            estimators: vec![EstimatorKind::CmeUnivariate, EstimatorKind::LmmseGaussMismatched],
            sample_count: 2_000,
            master_seed: 7,
            output: None,
            metric: Metric::Nmse,
            quad_order: DEFAULT_QUAD_ORDER,
        }
    }

    #[test]
    fn formats_like_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (-20.0, "-20"),
            (0.87871234567891, "0.878712346"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001234, "0.0001234"),
            (0.00001234, "1.234e-05"),
            (2.5e-300, "2.5e-300"),
            (f64::INFINITY, "inf"),
            (0.999999999949, "1"),
        ];
        for (x, want) in cases {
            assert_eq!(format_float(x), want, "{x}");
        }
    }

    #[test]
    fn nmse_examples() {
        let truths: Vec<CVector> = (1..5).map(|i| CVector::from_element(2, Complex64::new(i as f64, -1.0))).collect();
        assert_eq!(nmse(&truths, &truths).unwrap(), (0.0, 0.0));
        let zeros = vec![CVector::zeros(2); truths.len()];
        let (v, se) = nmse(&truths, &zeros).unwrap();
        assert!((v - 1.0).abs() < 1e-15 && se < 1e-12);
        assert!(nmse(&truths[..1], &zeros[..1]).is_err());
        assert!(nmse(&zeros, &zeros).is_err());
    }

    #[test]
    fn delta_method_matches_bootstrap_spread() {
        // Ratio estimator from independent batches: its empirical spread
        // should match the delta-method standard error.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut ratios = Vec::new();
        let mut ses = Vec::new();
        for _ in 0..400 {
            let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 2.0 + 0.1).collect();
            let a: Vec<f64> = b.iter().map(|x| 0.3 * x + rng.random::<f64>()).collect();
            let (r, se) = ratio_of_means(&a, &b).unwrap();
            ratios.push(r);
            ses.push(se);
        }
        let (_, spread) = mean_with_stderr(&ratios);
        let spread = spread * (ratios.len() as f64).sqrt();
        let mean_se = ses.iter().sum::<f64>() / ses.len() as f64;
        assert!((spread / mean_se - 1.0).abs() < 0.15, "{spread} vs {mean_se}");
    }

    #[test]
    fn child_seeds_are_distinct_and_stable() {
        let a = child_seed(1, "cme_numeric", 5, 3);
        assert_eq!(a, child_seed(1, "cme_numeric", 5, 3));
        assert_ne!(a, child_seed(2, "cme_numeric", 5, 3));
        assert_ne!(a, child_seed(1, "cme_numeri", 5, 3));
        assert_ne!(a, child_seed(1, "cme_numeric", 3, 5));
        assert_ne!(a, child_seed(1, "cme_numeric", 5, 4));
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "experiment": "demo",
            "prior": {"kind": "scalar", "weights": [0.8, 0.2], "variances": [0.1, 10], "normalize": true},
            "n": 1, "m": [1, 2], "pilots": ["optimal", "ones"],
            "snr_db": [-10, 0, "inf"],
            "estimators": ["lmmse_gmm"],
            "sample_count": 500, "master_seed": 3
        }"#;
        let config = ExperimentConfig::from_json_str(json).unwrap();
        assert_eq!(config.snr_db[2], SnrDb::NOISELESS);
        assert_eq!(config.pilots.kinds(), vec![PilotKind::Optimal, PilotKind::Ones]);
        assert_eq!(config.quad_order, DEFAULT_QUAD_ORDER);
        let again = ExperimentConfig::from_json_str(&config.to_json().unwrap()).unwrap();
        assert_eq!(again, config);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.sample_count = 99;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.experiment = "a,b".into();
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.n = 2;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.m = vec![];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.metric = Metric::CorrHq;
        c.m = vec![2];
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"experiment":"x","bogus":1}"#).is_err());
        let mut c = small_config();
        c.m = vec![2];
        assert!(matches!(run_experiment(&c), Err(Error::NotApplicable { .. })));
    }

    #[test]
    fn prior_cli_forms() {
        assert_eq!(PriorSpec::parse_cli("default").unwrap(), PriorSpec::two_component_scalar());
        let p = PriorSpec::parse_cli("0.5:1, 0.5:4").unwrap().build().unwrap();
        assert!((p.scalar_stats().unwrap().sigma_glob_sq - 1.0).abs() < 1e-12);
        let json = r#"{"kind":"scalar","weights":[1.0],"variances":[2.0]}"#;
        let p = PriorSpec::parse_cli(json).unwrap().build().unwrap();
        assert_eq!(p.scalar_stats().unwrap().sigma_glob_sq, 2.0);
        assert!(PriorSpec::parse_cli("0.5;1").is_err());
    }

    #[test]
    fn random_prior_is_reproducible() {
        let spec =
            PriorSpec::Random { dim: 4, weights: vec![0.8, 0.2], scales: vec![0.1, 10.0], seed: 9, normalize: false };
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        assert_eq!(a.covs()[1].matrix(), b.covs()[1].matrix());
        assert!((a.covs()[0].trace() - 0.4).abs() < 1e-9);
        assert!((a.covs()[1].trace() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn run_is_deterministic_and_ordered() {
        let config = small_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let order: Vec<(String, f64)> = a.rows.iter().map(|r| (r.estimator.clone(), r.snr_db)).collect();
        assert_eq!(
            order,
            vec![
                ("cme_univariate".into(), 0.0),
                ("cme_univariate".into(), 10.0),
                ("lmmse_gauss_mismatched".into(), 0.0),
                ("lmmse_gauss_mismatched".into(), 10.0)
            ]
        );
    }

    #[test]
    fn univariate_cell_matches_analytic_mse() {
        let result = run_experiment(&small_config()).unwrap();
        let prior = PriorSpec::two_component_scalar().build().unwrap();
        for snr in [0.0, 10.0] {
            let row = result.find("cme_univariate", 1, snr).unwrap();
            let want = mse_univariate_gmm(&prior, noise_var_for_snr(snr, 1.0, 1)).unwrap();
            assert!((row.nmse - want).abs() <= 3.0 * row.stderr, "{snr} dB: {} vs {want}", row.nmse);
        }
    }

    #[test]
    fn noiseless_pilot_cell_matches_analytic_mse() {
        let mut config = small_config();
        config.m = vec![4];
        config.snr_db = vec![SnrDb::NOISELESS];
        config.estimators = vec![EstimatorKind::CmePilotsLinear];
        let row = run_experiment(&config).unwrap().rows.remove(0);
        let stats = config.prior.build().unwrap().scalar_stats().unwrap();
        let want = mse_pilots_gmm(&stats, 4).unwrap();
        assert!((row.nmse - want).abs() <= 3.0 * row.stderr);
    }

    #[test]
    fn csv_round_trip_and_header() {
        assert_eq!(MonteCarloResult::default().to_csv(), format!("{CSV_HEADER}\n"));
        let result = run_experiment(&small_config()).unwrap();
        let text = result.to_csv();
        assert!(!text.contains('\r'));
        let parsed = MonteCarloResult::from_csv(&text).unwrap();
        assert_eq!(parsed.rows.len(), result.rows.len());
        for (p, r) in parsed.rows.iter().zip(&result.rows) {
            assert_eq!(p.seed, r.seed);
            assert!((p.nmse - r.nmse).abs() <= 1e-8 * r.nmse);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_results(&result, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn correlation_metric_rows() {
        let mut config = small_config();
        config.metric = Metric::CorrHq;
        config.estimators.clear();
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows.iter().all(|r| r.estimator == CORR_LABEL));
    }

    #[test]
    fn presets_match_stated_parameters() {
        assert_eq!(figure_preset(1, false).unwrap().m, vec![1, 8, 16, 32]);
        assert_eq!(figure_preset(1, false).unwrap().n, 64);
        let small = figure_preset(1, true).unwrap();
        assert_eq!((small.n, small.sample_count), (16, 2_000));
        let f2 = figure_preset(2, false).unwrap();
        assert_eq!((f2.n, f2.m.clone()), (1, vec![1]));
        assert_eq!(figure_preset(4, false).unwrap().m, vec![1, 5, 10]);
        assert_eq!(figure_preset(6, false).unwrap().m, vec![1, 2, 5, 10]);
        assert_eq!(figure_preset(6, false).unwrap().pilots.kinds().len(), 2);
        assert_eq!(figure_preset(3, false).unwrap().snr_db, vec![SnrDb::NOISELESS]);
        for id in 1..=6 {
            assert_eq!(figure_preset(id, false).unwrap().sample_count, 10_000);
        }
        assert!(figure_preset(7, false).is_err());
        assert_eq!(preset_snr_grid().len(), 13);
    }

    #[test]
    fn multiple_pilot_kinds_label_series() {
        let mut config = small_config();
        config.m = vec![2];
        config.snr_db = vec![SnrDb(10.0)];
        config.estimators = vec![EstimatorKind::LmmseGmm];
        config.pilots = PilotSelection::Many(vec![PilotKind::Optimal, PilotKind::Ones]);
        let result = run_experiment(&config).unwrap();
        let labels: Vec<&str> = result.rows.iter().map(|r| r.experiment.as_str()).collect();
        assert_eq!(labels, vec!["unit/optimal", "unit/ones"]);
    }
}
