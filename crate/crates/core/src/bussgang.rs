//! Bussgang decomposition `r = B y + q` under a Gaussian mixture prior and the
//! resulting linear MMSE estimator `ĥ = C_hr C_r^{-1} r`.
//!
//! Every quantity is a `p_k`-weighted sum of the familiar Gaussian-case
//! expressions evaluated with the per-component output covariance
//! `C_{y|k} = A C_k A^H + η² I`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::{QuantizedObservation, SystemModel};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, hermitian_solve, right_divide_hermitian, CMatrix, CVector};
use crate::stats::GmmPrior;

/// Arcsine arguments beyond `1 + ASIN_CLAMP` are treated as an error.
pub const ASIN_CLAMP: f64 = 1e-9;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

fn check_dims(prior: &GmmPrior, system: &SystemModel) -> Result<()> {
    if prior.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "prior dimension {} does not match system dimension {}",
            prior.dim(),
            system.dim()
        )));
    }
    Ok(())
}

/// Per-component output covariances `C_{y|k}` and their mixture `C_y`.
pub fn conditional_out_covs(prior: &GmmPrior, system: &SystemModel) -> Result<(Vec<CMatrix>, CMatrix)> {
    check_dims(prior, system)?;
    let nm = system.obs_len();
    let mut total = CMatrix::zeros(nm, nm);
    let mut per_component = Vec::with_capacity(prior.num_components());
    for (k, (p, cov)) in prior.components().enumerate() {
        let c_yk = system.out_cov(cov.matrix());
        if let Some(i) = (0..nm).find(|&i| !(c_yk[(i, i)].re > 0.0)) {
            return Err(Error::Singular(format!(
                "component {k}: output variance of entry {i} is zero, normalization undefined"
            )));
        }
        total += c_yk.scale(p);
        per_component.push(c_yk);
    }
    Ok((per_component, hermitian_part(&total)))
}

/// `diag(C)^{-1/2}` as a vector.
fn inv_sqrt_diag(c: &CMatrix) -> DVector<f64> {
    DVector::from_fn(c.nrows(), |i, _| 1.0 / c[(i, i)].re.sqrt())
}

/// `D X` for diagonal `D`.
fn scale_rows(d: &DVector<f64>, x: &CMatrix) -> CMatrix {
    let mut out = x.clone();
    for (i, s) in d.iter().enumerate() {
        out.row_mut(i).scale_mut(*s);
    }
    out
}

/// `X D` for diagonal `D`.
fn scale_cols(x: &CMatrix, d: &DVector<f64>) -> CMatrix {
    let mut out = x.clone();
    for (j, s) in d.iter().enumerate() {
        out.column_mut(j).scale_mut(*s);
    }
    out
}

/// `Σ_k p_k diag(C_{y|k})^{-1/2} C_{y|k}`, the un-whitened part of the gain.
fn gain_numerator(prior: &GmmPrior, per_component: &[CMatrix]) -> CMatrix {
    let nm = per_component[0].nrows();
    let mut acc = CMatrix::zeros(nm, nm);
    for (p, c_yk) in prior.weights().iter().zip(per_component) {
        acc += scale_rows(&inv_sqrt_diag(c_yk), c_yk).scale(*p);
    }
    acc
}

/// Bussgang gain `B = √(2/π) Σ_k p_k diag(C_{y|k})^{-1/2} C_{y|k} C_y^{-1}`.
pub fn bussgang_gain(prior: &GmmPrior, system: &SystemModel) -> Result<CMatrix> {
    let (per_component, c_y) = conditional_out_covs(prior, system)?;
    gain_from(prior, &per_component, &c_y)
}

fn gain_from(prior: &GmmPrior, per_component: &[CMatrix], c_y: &CMatrix) -> Result<CMatrix> {
    let num = gain_numerator(prior, per_component);
    Ok(right_divide_hermitian(&num, c_y, "C_y")?.scale(sqrt_2_over_pi()))
}

/// `C_hr = √(2/π) Σ_k p_k C_k A^H diag(C_{y|k})^{-1/2}`.
pub fn cross_cov_hr(prior: &GmmPrior, system: &SystemModel) -> Result<CMatrix> {
    let (per_component, _) = conditional_out_covs(prior, system)?;
    Ok(cross_cov_hr_from(prior, system, &per_component))
}

fn cross_cov_hr_from(prior: &GmmPrior, system: &SystemModel, per_component: &[CMatrix]) -> CMatrix {
    let mut acc = CMatrix::zeros(system.dim(), system.obs_len());
    for ((p, cov), c_yk) in prior.components().zip(per_component) {
        acc += scale_cols(&system.right_adjoint(cov.matrix()), &inv_sqrt_diag(c_yk)).scale(p);
    }
    acc.scale(sqrt_2_over_pi())
}

fn clamped_asin(x: f64) -> Result<f64> {
    if x.abs() > 1.0 {
        if x.abs() > 1.0 + ASIN_CLAMP {
            return Err(Error::Numerical(format!("normalized covariance entry {x} outside [-1, 1]")));
        }
        return Ok(x.signum() * PI / 2.0);
    }
    Ok(x.asin())
}

/// Mixture-weighted arcsine law
/// `C_r = (2/π) Σ_k p_k [asin(Re C̄_{y|k}) + j asin(Im C̄_{y|k})]`.
pub fn quantized_cov(prior: &GmmPrior, system: &SystemModel) -> Result<CMatrix> {
    let (per_component, _) = conditional_out_covs(prior, system)?;
    quantized_cov_from(prior, &per_component)
}

fn quantized_cov_from(prior: &GmmPrior, per_component: &[CMatrix]) -> Result<CMatrix> {
    let nm = per_component[0].nrows();
    let mut acc = CMatrix::zeros(nm, nm);
    for (p, c_yk) in prior.weights().iter().zip(per_component) {
        let d = inv_sqrt_diag(c_yk);
        for i in 0..nm {
            for j in 0..nm {
                if i == j {
                    continue;
                }
                let z = c_yk[(i, j)] * (d[i] * d[j]);
                acc[(i, j)] += Complex64::new(clamped_asin(z.re)?, clamped_asin(z.im)?) * *p;
            }
        }
    }
    let mut c_r = acc.scale(2.0 / PI);
    // Normalized diagonals are exactly one, so each weighted arcsine term is too.
    for i in 0..nm {
        c_r[(i, i)] = Complex64::new(1.0, 0.0);
    }
    Ok(hermitian_part(&c_r))
}

/// Cross-covariance between the signal and the auxiliary quantization noise,
/// evaluated directly as
/// `√(2/π) Σ_k p_k (C_k A^H D_k − C_h A^H C_y^{-1} C_{y|k} D_k)`.
pub fn cross_cov_hq(prior: &GmmPrior, system: &SystemModel) -> Result<CMatrix> {
    let (per_component, c_y) = conditional_out_covs(prior, system)?;
    cross_cov_hq_from(prior, system, &per_component, &c_y)
}

fn cross_cov_hq_from(
    prior: &GmmPrior,
    system: &SystemModel,
    per_component: &[CMatrix],
    c_y: &CMatrix,
) -> Result<CMatrix> {
    let mut direct = CMatrix::zeros(system.dim(), system.obs_len());
    let mut normalized = CMatrix::zeros(system.obs_len(), system.obs_len());
    for ((p, cov), c_yk) in prior.components().zip(per_component) {
        let d = inv_sqrt_diag(c_yk);
        direct += scale_cols(&system.right_adjoint(cov.matrix()), &d).scale(p);
        normalized += scale_cols(c_yk, &d).scale(p);
    }
    let coupled = system.right_adjoint(prior.global_cov().matrix()) * hermitian_solve(c_y, &normalized, "C_y")?;
    Ok((direct - coupled).scale(sqrt_2_over_pi()))
}

/// All second-order quantities of the Bussgang decomposition plus the
/// precomputed linear MMSE filter `W = C_hr C_r^{-1}`.
#[derive(Debug, Clone)]
pub struct BussgangQuantities {
    pub gain: CMatrix,
    pub cross_cov_hr: CMatrix,
    pub quantized_cov: CMatrix,
    pub cross_cov_hq: CMatrix,
    pub per_component_out_covs: Vec<CMatrix>,
    pub total_out_cov: CMatrix,
    filter: CMatrix,
}

impl BussgangQuantities {
    pub fn compute(prior: &GmmPrior, system: &SystemModel) -> Result<Self> {
        let (per_component, c_y) = conditional_out_covs(prior, system)?;
        let gain = gain_from(prior, &per_component, &c_y)?;
        let c_hr = cross_cov_hr_from(prior, system, &per_component);
        let c_r = quantized_cov_from(prior, &per_component)?;
        let c_hq = cross_cov_hq_from(prior, system, &per_component, &c_y)?;
        let filter = right_divide_hermitian(&c_hr, &c_r, "C_r")?;
        Ok(Self {
            gain,
            cross_cov_hr: c_hr,
            quantized_cov: c_r,
            cross_cov_hq: c_hq,
            per_component_out_covs: per_component,
            total_out_cov: c_y,
            filter,
        })
    }

    /// `W = C_hr C_r^{-1}`.
    pub fn filter(&self) -> &CMatrix {
        &self.filter
    }
}

/// `ĥ = W r` with the filter precomputed in `quantities`.
pub fn lmmse_estimate(quantities: &BussgangQuantities, r: &QuantizedObservation) -> Result<CVector> {
    apply_filter(&quantities.filter, r)
}

fn apply_filter(filter: &CMatrix, r: &QuantizedObservation) -> Result<CVector> {
    if r.len() != filter.ncols() {
        return Err(Error::Dimension(format!("observation length {} vs filter width {}", r.len(), filter.ncols())));
    }
    Ok(filter * r.bits())
}

/// Linear MMSE estimator holding only the filter; skips the gain and
/// `C_hq`, which need `C_y^{-1}` and are not used for estimation.
#[derive(Debug, Clone)]
pub struct LmmseEstimator {
    filter: CMatrix,
}

impl LmmseEstimator {
    pub fn new(prior: &GmmPrior, system: &SystemModel) -> Result<Self> {
        let (per_component, _) = conditional_out_covs(prior, system)?;
        let c_hr = cross_cov_hr_from(prior, system, &per_component);
        let c_r = quantized_cov_from(prior, &per_component)?;
        let filter = hermitian_solve(&c_r, &c_hr.adjoint(), "C_r")?.adjoint();
        Ok(Self { filter })
    }

    pub fn filter(&self) -> &CMatrix {
        &self.filter
    }

    pub fn estimate(&self, r: &QuantizedObservation) -> Result<CVector> {
        apply_filter(&self.filter, r)
    }
}
