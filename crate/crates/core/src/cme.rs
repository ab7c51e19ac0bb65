//! Conditional mean estimators `E[h | r]` for scalar signals.
//!
//! * [`cme_univariate`]: single noisy observation, closed form, linear in `r`.
//! * [`cme_pilots_linear`] / [`cme_pilots_phase`]: noiseless observations with
//!   the equidistant-phase pilots; two closed forms that agree on every
//!   pattern the system can produce.
//! * [`NumericCme`]: noisy multi-observation case via
//!   `E[h|r] = Σ_k p(k|r) E[h|r,k]`, with every per-component integral
//!   evaluated by 2-D quadrature over `h`.
//!
//! The vector (`N > 1`) noisy case is not covered; use the linear MMSE
//! estimator from [`crate::bussgang`] there.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bussgang::{quantized_cov, LmmseEstimator};
use crate::channel::{optimal_pilots, QuantizedObservation, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_solve, CMatrix, CVector};
use crate::mvn::log_std_normal_cdf;
use crate::quad::{composite, gauss_legendre};
use crate::stats::GmmPrior;

/// Gauss–Legendre nodes per angular sector / radial panel.
pub const DEFAULT_QUAD_ORDER: usize = 16;
pub const MIN_QUAD_ORDER: usize = 16;

/// Pilots must match the equidistant-phase design to this tolerance.
const PILOT_MATCH_TOLERANCE: f64 = 1e-12;

/// Sector grading kicks in once the kink layer is this many times thinner than
/// the sector.
const SECTOR_GRADING_RATIO: f64 = 256.0;

/// Radial integration is truncated at this many component standard deviations.
const RADIAL_CUTOFF: f64 = 9.0;

/// Above this many table entries per component, log-likelihood terms are
/// evaluated on the fly instead of being tabulated.
const TABLE_LIMIT: usize = 1 << 24;

/// `√(2/π) Σ_k p_k σ_k² / √(σ_k² + η²)`, the coefficient of the scalar CME.
pub fn univariate_coefficient(prior: &GmmPrior, noise_var: f64) -> Result<f64> {
    let vars = prior.component_variances()?;
    let sum: f64 = prior
        .weights()
        .iter()
        .zip(&vars)
        .map(|(p, v)| {
            let denom = (v + noise_var).sqrt();
            if denom > 0.0 {
                p * v / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok((2.0 / PI).sqrt() * sum)
}

fn require_scalar_obs(r: &QuantizedObservation, expected: usize) -> Result<()> {
    if r.len() != expected {
        return Err(Error::Dimension(format!("expected {expected} quantized entries, got {}", r.len())));
    }
    Ok(())
}

/// Closed-form CME for `r = Q(h + n)` with scalar `h`.
pub fn cme_univariate(prior: &GmmPrior, noise_var: f64, r: &QuantizedObservation) -> Result<Complex64> {
    require_scalar_obs(r, 1)?;
    Ok(r.bits()[0] * univariate_coefficient(prior, noise_var)?)
}

/// Result of the phase-form pilot CME.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEstimate {
    pub value: Complex64,
    /// The bit mean was exactly zero, so the angle 0 tie-break was used.
    pub degenerate: bool,
}

/// Noiseless pilot CME for the equidistant-phase pilots, in both of its forms.
#[derive(Debug, Clone)]
pub struct PilotCme {
    sigma_bar: f64,
    /// `C_r^{-1} a`.
    whitened_pilots: CVector,
}

fn check_optimal_pilots(pilots: &CVector) -> Result<()> {
    let reference = optimal_pilots(pilots.len());
    if pilots.is_empty() || (pilots - reference).camax() > PILOT_MATCH_TOLERANCE {
        return Err(Error::InvalidArgument("pilot CME requires the equidistant-phase pilots".into()));
    }
    Ok(())
}

impl PilotCme {
    pub fn new(prior: &GmmPrior, pilots: &CVector) -> Result<Self> {
        check_optimal_pilots(pilots)?;
        let stats = prior.scalar_stats()?;
        let system = SystemModel::new(pilots.clone(), 0.0, 1)?;
        let c_r = quantized_cov(prior, &system)?;
        let rhs = CMatrix::from_column_slice(pilots.len(), 1, pilots.as_slice());
        let whitened = hermitian_solve(&c_r, &rhs, "C_r")?;
        Ok(Self { sigma_bar: stats.sigma_bar, whitened_pilots: whitened.column(0).into_owned() })
    }

    pub fn num_obs(&self) -> usize {
        self.whitened_pilots.len()
    }

    /// `√(2/π) σ̄ a^H C_r^{-1} r`.
    pub fn linear(&self, r: &QuantizedObservation) -> Result<Complex64> {
        require_scalar_obs(r, self.num_obs())?;
        Ok(self.whitened_pilots.dotc(r.bits()) * ((2.0 / PI).sqrt() * self.sigma_bar))
    }

    pub fn phase(&self, r: &QuantizedObservation) -> Result<PhaseEstimate> {
        require_scalar_obs(r, self.num_obs())?;
        Ok(phase_form(self.sigma_bar, r))
    }
}

/// `Σ_k p_k (2Mσ_k/√π) sin(π/4M) exp(jφ(r))` with
/// `φ(r) = ∠(mean r) − (M−1)π/(4M)`.
fn phase_form(sigma_bar: f64, r: &QuantizedObservation) -> PhaseEstimate {
    let m = r.len() as f64;
    // Integer sign sums avoid rounding in the mean.
    let re: i64 = (0..r.len()).map(|i| r.re_sign(i) as i64).sum();
    let im: i64 = (0..r.len()).map(|i| r.im_sign(i) as i64).sum();
    let degenerate = re == 0 && im == 0;
    let angle = if degenerate { 0.0 } else { (im as f64).atan2(re as f64) };
    let phi = angle - (m - 1.0) * PI / (4.0 * m);
    let magnitude = 2.0 * m * sigma_bar / PI.sqrt() * (PI / (4.0 * m)).sin();
    PhaseEstimate { value: Complex64::from_polar(magnitude, phi), degenerate }
}

/// Linear form of the noiseless pilot CME (pilots must be `optimal_pilots(M)`).
pub fn cme_pilots_linear(prior: &GmmPrior, pilots: &CVector, r: &QuantizedObservation) -> Result<Complex64> {
    PilotCme::new(prior, pilots)?.linear(r)
}

/// Phase form of the noiseless pilot CME for `M = r.len()` observations.
pub fn cme_pilots_phase(prior: &GmmPrior, m: usize, r: &QuantizedObservation) -> Result<PhaseEstimate> {
    require_scalar_obs(r, m)?;
    Ok(phase_form(prior.scalar_stats()?.sigma_bar, r))
}

/// Quadrature grid for one mixture component.
#[derive(Debug, Clone)]
struct ComponentGrid {
    nodes: Vec<Complex64>,
    log_weights: Vec<f64>,
    /// `√2·Re(a_m h)/η` at row `2m`, `√2·Im(a_m h)/η` at row `2m+1`.
    projections: Vec<f64>,
    /// `ln Φ(±projection)`, rows `2i` (+) and `2i+1` (−), when small enough.
    table: Option<Vec<f64>>,
}

impl ComponentGrid {
    fn len(&self) -> usize {
        self.nodes.len()
    }

    /// `ln p(r|h) + ln(quadrature weight × prior density)` at every node.
    fn log_integrand(&self, signs: &[bool], acc: &mut Vec<f64>) {
        let n = self.len();
        acc.clear();
        acc.extend_from_slice(&self.log_weights);
        match &self.table {
            Some(table) => {
                for (i, &positive) in signs.iter().enumerate() {
                    let row = 2 * i + usize::from(!positive);
                    let slice = &table[row * n..(row + 1) * n];
                    acc.iter_mut().zip(slice).for_each(|(a, t)| *a += t);
                }
            }
            None => {
                for (i, &positive) in signs.iter().enumerate() {
                    let s = if positive { 1.0 } else { -1.0 };
                    let slice = &self.projections[i * n..(i + 1) * n];
                    acc.iter_mut().zip(slice).for_each(|(a, u)| *a += log_std_normal_cdf(s * u));
                }
            }
        }
    }
}

/// Output of the numeric CME for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericCmeOutput {
    pub estimate: Complex64,
    /// Responsibilities `p(k|r)`.
    pub posterior: Vec<f64>,
    /// `ln p(r|k)`.
    pub log_evidence: Vec<f64>,
}

/// Numeric CME for a scalar signal observed through `r = Q(a h + n)`, `η² > 0`.
///
/// Each component integral runs over `h = ρ e^{jθ}` in polar coordinates.
/// The likelihood `Π_m Φ(±√2 Re(a_m h)/η) Φ(±√2 Im(a_m h)/η)` changes sharply
/// across the rays where `Re(a_m h)` or `Im(a_m h)` vanishes, so the angle is
/// split into sectors at those rays (graded towards them when the noise is
/// small) and the radius into panels graded from the noise scale up to
/// `9σ_k`. Every sector and panel gets a Gauss–Legendre rule of
/// `quad_order` nodes. Likelihood products are accumulated in the log domain.
#[derive(Debug, Clone)]
pub struct NumericCme {
    weights: Vec<f64>,
    num_obs: usize,
    grids: Vec<ComponentGrid>,
}

fn angular_breaks(pilots: &CVector, eps: f64, max_sigma: f64) -> Vec<f64> {
    let mut kinks: Vec<f64> = Vec::new();
    for a in pilots.iter().filter(|a| a.norm() > 0.0) {
        let psi = a.arg();
        for base in [-psi, FRAC_PI_2 - psi] {
            let b = base.rem_euclid(PI);
            kinks.extend([b, b + PI]);
        }
    }
    kinks.sort_by(f64::total_cmp);
    kinks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if kinks.len() > 1 && (kinks[0] + 2.0 * PI - kinks[kinks.len() - 1]).abs() < 1e-12 {
        kinks.pop();
    }
    let first = kinks[0];
    kinks.push(first + 2.0 * PI);

    let min_layer = if max_sigma > 0.0 { eps / (RADIAL_CUTOFF * max_sigma) } else { f64::INFINITY };
    let mut breaks = vec![kinks[0]];
    for pair in kinks.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let len = hi - lo;
        let ratio = len / (SECTOR_GRADING_RATIO * min_layer);
        let levels = if ratio > 1.0 { ratio.log(4.0).ceil() as i32 } else { 0 };
        let mut cuts = Vec::with_capacity(2 * levels as usize);
        for j in 1..=levels {
            let d = 0.5 * len * 4f64.powi(-j);
            cuts.push(lo + d);
            cuts.push(hi - d);
        }
        cuts.sort_by(f64::total_cmp);
        breaks.extend(cuts);
        breaks.push(hi);
    }
    breaks
}

fn radial_breaks(sigma: f64, eps: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut x = eps;
    while x < sigma / 2.0 {
        breaks.push(x);
        x *= 3.0;
    }
    breaks.extend([1.5 * sigma, 3.0 * sigma, 5.0 * sigma, RADIAL_CUTOFF * sigma]);
    breaks
}

impl NumericCme {
    pub fn new(prior: &GmmPrior, system: &SystemModel, quad_order: usize) -> Result<Self> {
        if prior.dim() != 1 || system.dim() != 1 {
            return Err(Error::NotApplicable {
                kind: EstimatorKind::CmeNumeric.to_string(),
                reason: "numeric CME supports scalar signals only".into(),
            });
        }
        let noise_var = system.noise_var();
        if !(noise_var > 0.0) {
            return Err(Error::NotApplicable {
                kind: EstimatorKind::CmeNumeric.to_string(),
                reason: "noise variance must be positive (use the closed forms for the noiseless case)".into(),
            });
        }
        if quad_order < MIN_QUAD_ORDER {
            return Err(Error::InvalidArgument(format!("quad_order must be >= {MIN_QUAD_ORDER}, got {quad_order}")));
        }
        let eta = noise_var.sqrt();
        let pilots = system.pilots();
        let max_amp = pilots.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let eps = eta / (2f64.sqrt() * max_amp);
        let sigmas: Vec<f64> = prior.component_variances()?.iter().map(|v| v.sqrt()).collect();
        let max_sigma = sigmas.iter().copied().fold(0.0, f64::max);

        let rule = gauss_legendre(quad_order);
        let (thetas, theta_w) = composite(&angular_breaks(pilots, eps, max_sigma), &rule);
        let rays: Vec<Complex64> = thetas.iter().map(|t| Complex64::from_polar(1.0, *t)).collect();

        let grids = sigmas
            .iter()
            .map(|&sigma| {
                let (nodes, log_weights) = if sigma > 0.0 {
                    let (rhos, rho_w) = composite(&radial_breaks(sigma, eps), &rule);
                    let log_norm = (PI * sigma * sigma).ln();
                    let mut nodes = Vec::with_capacity(rays.len() * rhos.len());
                    let mut log_w = Vec::with_capacity(nodes.capacity());
                    for (ray, wt) in rays.iter().zip(&theta_w) {
                        for (rho, wr) in rhos.iter().zip(&rho_w) {
                            nodes.push(ray * rho);
                            log_w.push(wt.ln() + wr.ln() + rho.ln() - rho * rho / (sigma * sigma) - log_norm);
                        }
                    }
                    (nodes, log_w)
                } else {
                    (vec![Complex64::new(0.0, 0.0)], vec![0.0])
                };
                build_grid(nodes, log_weights, pilots, eta)
            })
            .collect();

        Ok(Self { weights: prior.weights().to_vec(), num_obs: pilots.len(), grids })
    }

    /// Total quadrature nodes over all components.
    pub fn num_nodes(&self) -> usize {
        self.grids.iter().map(ComponentGrid::len).sum()
    }

    pub fn evaluate(&self, r: &QuantizedObservation) -> Result<NumericCmeOutput> {
        require_scalar_obs(r, self.num_obs)?;
        let signs: Vec<bool> = (0..r.len()).flat_map(|i| [r.re_sign(i) > 0.0, r.im_sign(i) > 0.0]).collect();
        let mut logs: Vec<Vec<f64>> = Vec::with_capacity(self.grids.len());
        let mut scratch = Vec::new();
        for grid in &self.grids {
            grid.log_integrand(&signs, &mut scratch);
            logs.push(scratch.clone());
        }
        let peak = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Numerical(format!(
                "all component evidences underflowed for pattern {:?} (peak log-integrand {peak})",
                r.key()
            )));
        }

        let mut evidence_scaled = Vec::with_capacity(self.grids.len());
        let mut numerator = Complex64::new(0.0, 0.0);
        for ((grid, log), p) in self.grids.iter().zip(&logs).zip(&self.weights) {
            let mut ev = 0.0;
            let mut num = Complex64::new(0.0, 0.0);
            for (l, h) in log.iter().zip(&grid.nodes) {
                let w = (l - peak).exp();
                ev += w;
                num += h * w;
            }
            evidence_scaled.push(ev);
            numerator += num * *p;
        }
        let total: f64 = evidence_scaled.iter().zip(&self.weights).map(|(e, p)| e * p).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Numerical("evidence normalization is not positive".into()));
        }
        let posterior = evidence_scaled.iter().zip(&self.weights).map(|(e, p)| p * e / total).collect();
        let log_evidence = evidence_scaled.iter().map(|e| e.ln() + peak).collect();
        let estimate = numerator / total;
        if !(estimate.re.is_finite() && estimate.im.is_finite()) {
            return Err(Error::Numerical("non-finite quadrature result".into()));
        }
        Ok(NumericCmeOutput { estimate, posterior, log_evidence })
    }

    pub fn estimate(&self, r: &QuantizedObservation) -> Result<Complex64> {
        Ok(self.evaluate(r)?.estimate)
    }

    pub fn posterior_weights(&self, r: &QuantizedObservation) -> Result<Vec<f64>> {
        Ok(self.evaluate(r)?.posterior)
    }
}

fn build_grid(nodes: Vec<Complex64>, log_weights: Vec<f64>, pilots: &CVector, eta: f64) -> ComponentGrid {
    let n = nodes.len();
    let rows = 2 * pilots.len();
    let scale = 2f64.sqrt() / eta;
    let mut projections = vec![0.0; rows * n];
    for (m, a) in pilots.iter().enumerate() {
        for (j, h) in nodes.iter().enumerate() {
            let ah = a * h;
            projections[2 * m * n + j] = scale * ah.re;
            projections[(2 * m + 1) * n + j] = scale * ah.im;
        }
    }
    let table = (2 * rows * n <= TABLE_LIMIT).then(|| {
        let mut table = vec![0.0; 2 * rows * n];
        for i in 0..rows {
            for j in 0..n {
                let u = projections[i * n + j];
                table[2 * i * n + j] = log_std_normal_cdf(u);
                table[(2 * i + 1) * n + j] = log_std_normal_cdf(-u);
            }
        }
        table
    });
    ComponentGrid { nodes, log_weights, projections, table }
}

/// One-shot numeric CME.
pub fn cme_numeric_scalar(
    prior: &GmmPrior,
    system: &SystemModel,
    r: &QuantizedObservation,
    quad_order: usize,
) -> Result<Complex64> {
    NumericCme::new(prior, system, quad_order)?.estimate(r)
}

/// One-shot responsibilities `p(k|r)`.
pub fn posterior_weights(
    prior: &GmmPrior,
    system: &SystemModel,
    r: &QuantizedObservation,
    quad_order: usize,
) -> Result<Vec<f64>> {
    NumericCme::new(prior, system, quad_order)?.posterior_weights(r)
}

/// Estimator roster, named as in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    LmmseGmm,
    LmmseGaussMismatched,
    CmeUnivariate,
    CmePilotsLinear,
    CmePilotsPhase,
    CmeNumeric,
    CmeGaussMismatched,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 7] = [
        EstimatorKind::LmmseGmm,
        EstimatorKind::LmmseGaussMismatched,
        EstimatorKind::CmeUnivariate,
        EstimatorKind::CmePilotsLinear,
        EstimatorKind::CmePilotsPhase,
        EstimatorKind::CmeNumeric,
        EstimatorKind::CmeGaussMismatched,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::LmmseGmm => "lmmse_gmm",
            EstimatorKind::LmmseGaussMismatched => "lmmse_gauss_mismatched",
            EstimatorKind::CmeUnivariate => "cme_univariate",
            EstimatorKind::CmePilotsLinear => "cme_pilots_linear",
            EstimatorKind::CmePilotsPhase => "cme_pilots_phase",
            EstimatorKind::CmeNumeric => "cme_numeric",
            EstimatorKind::CmeGaussMismatched => "cme_gauss_mismatched",
        }
    }

    /// Whether outputs depend only on the bit pattern through an expensive
    /// computation worth caching.
    pub fn benefits_from_cache(self) -> bool {
        matches!(self, EstimatorKind::CmeNumeric | EstimatorKind::CmeGaussMismatched)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator kind `{s}`")))
    }
}

/// An estimator bound to a prior and a system.
pub trait Estimator: Send + Sync {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector>;
}

impl Estimator for LmmseEstimator {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        LmmseEstimator::estimate(self, r)
    }
}

fn scalar(v: Complex64) -> CVector {
    DVector::from_element(1, v)
}

struct Univariate {
    coefficient: f64,
}

impl Estimator for Univariate {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        require_scalar_obs(r, 1)?;
        Ok(scalar(r.bits()[0] * self.coefficient))
    }
}

struct PilotsLinear(PilotCme);

impl Estimator for PilotsLinear {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        self.0.linear(r).map(scalar)
    }
}

struct PilotsPhase(PilotCme);

impl Estimator for PilotsPhase {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        Ok(scalar(self.0.phase(r)?.value))
    }
}

impl Estimator for NumericCme {
    fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        NumericCme::estimate(self, r).map(scalar)
    }
}

/// Estimator choice together with the model it is built for.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub prior: GmmPrior,
    pub system: SystemModel,
    pub quad_order: usize,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, prior: GmmPrior, system: SystemModel) -> Self {
        Self { kind, prior, system, quad_order: DEFAULT_QUAD_ORDER }
    }

    pub fn with_quad_order(mut self, quad_order: usize) -> Self {
        self.quad_order = quad_order;
        self
    }

    fn not_applicable(&self, reason: &str) -> Error {
        Error::NotApplicable { kind: self.kind.to_string(), reason: reason.to_string() }
    }

    fn has_optimal_pilots(&self) -> bool {
        check_optimal_pilots(self.system.pilots()).is_ok()
    }

    /// Checks the kind-specific applicability rules without building anything.
    pub fn check_applicable(&self) -> Result<()> {
        if self.prior.dim() != self.system.dim() {
            return Err(Error::Dimension(format!(
                "prior dimension {} vs system dimension {}",
                self.prior.dim(),
                self.system.dim()
            )));
        }
        let scalar = self.system.dim() == 1;
        let noiseless = self.system.noise_var() == 0.0;
        let m = self.system.num_obs();
        match self.kind {
            EstimatorKind::LmmseGmm | EstimatorKind::LmmseGaussMismatched => Ok(()),
            EstimatorKind::CmeUnivariate if !(scalar && m == 1) => Err(self.not_applicable("requires N = 1 and M = 1")),
            EstimatorKind::CmeUnivariate => Ok(()),
            EstimatorKind::CmePilotsLinear | EstimatorKind::CmePilotsPhase => {
                if !scalar || !noiseless {
                    Err(self.not_applicable("requires N = 1 and a noiseless system"))
                } else if !self.has_optimal_pilots() {
                    Err(self.not_applicable("requires the equidistant-phase pilots"))
                } else {
                    Ok(())
                }
            }
            EstimatorKind::CmeNumeric => {
                if !scalar {
                    Err(self.not_applicable("requires N = 1"))
                } else if noiseless {
                    Err(self.not_applicable("requires noise variance > 0"))
                } else {
                    Ok(())
                }
            }
            EstimatorKind::CmeGaussMismatched => {
                if !scalar {
                    Err(self.not_applicable("requires N = 1"))
                } else if noiseless && m > 1 && !self.has_optimal_pilots() {
                    Err(self.not_applicable("noiseless multi-observation case needs the equidistant-phase pilots"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Builds the estimator, doing all model-dependent precomputation once.
    pub fn build(&self) -> Result<Box<dyn Estimator>> {
        self.check_applicable()?;
        let noiseless = self.system.noise_var() == 0.0;
        let m = self.system.num_obs();
        Ok(match self.kind {
            EstimatorKind::LmmseGmm => Box::new(LmmseEstimator::new(&self.prior, &self.system)?),
            EstimatorKind::LmmseGaussMismatched => {
                Box::new(LmmseEstimator::new(&self.prior.mismatched_gaussian(), &self.system)?)
            }
            EstimatorKind::CmeUnivariate => {
                Box::new(Univariate { coefficient: univariate_coefficient(&self.prior, self.system.noise_var())? })
            }
            EstimatorKind::CmePilotsLinear => Box::new(PilotsLinear(PilotCme::new(&self.prior, self.system.pilots())?)),
            EstimatorKind::CmePilotsPhase => Box::new(PilotsPhase(PilotCme::new(&self.prior, self.system.pilots())?)),
            EstimatorKind::CmeNumeric => Box::new(NumericCme::new(&self.prior, &self.system, self.quad_order)?),
            EstimatorKind::CmeGaussMismatched => {
                let gauss = self.prior.mismatched_gaussian();
                if m == 1 {
                    Box::new(Univariate { coefficient: univariate_coefficient(&gauss, self.system.noise_var())? })
                } else if noiseless {
                    Box::new(PilotsPhase(PilotCme::new(&gauss, self.system.pilots())?))
                } else {
                    Box::new(NumericCme::new(&gauss, &self.system, self.quad_order)?)
                }
            }
        })
    }
}
