//! Pilot-based observation model `r = Q(A h + n)` with `A = a ⊗ I_N`.
//!
//! Observations are stored column-wise vectorized: entry `m·N + n` of `y` is
//! `a_m h_n + noise`.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::stats::{standard_complex_normal, GmmPrior};

/// Tolerance on the pilot power constraint `‖a‖² = M`.
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Pilot vector, noise level and signal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pilots: CVector,
    noise_var: f64,
    dim: usize,
}

impl SystemModel {
    pub fn new(pilots: CVector, noise_var: f64, dim: usize) -> Result<Self> {
        let m = pilots.len();
        if m == 0 || dim == 0 {
            return Err(Error::Dimension("need at least one pilot and N >= 1".into()));
        }
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance must be finite and >= 0, got {noise_var}")));
        }
        let power = pilots.norm_squared();
        if (power - m as f64).abs() > POWER_TOLERANCE {
            return Err(Error::InvalidArgument(format!("pilot power {power} violates ||a||^2 = M = {m}")));
        }
        Ok(Self { pilots, noise_var, dim })
    }

    pub fn pilots(&self) -> &CVector {
        &self.pilots
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Signal dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of pilot observations `M`.
    pub fn num_obs(&self) -> usize {
        self.pilots.len()
    }

    /// Length `N·M` of the vectorized observation.
    pub fn obs_len(&self) -> usize {
        self.dim * self.pilots.len()
    }

    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        Self::new(self.pilots.clone(), noise_var, self.dim)
    }

    /// `A h`.
    pub fn apply(&self, h: &CVector) -> CVector {
        let n = self.dim;
        DVector::from_fn(self.obs_len(), |i, _| self.pilots[i / n] * h[i % n])
    }

    /// `C A^H = a^H ⊗ C` for an `N×N` matrix `C`.
    pub fn right_adjoint(&self, c: &CMatrix) -> CMatrix {
        let n = self.dim;
        let mut out = CMatrix::zeros(n, self.obs_len());
        for (m, a) in self.pilots.iter().enumerate() {
            out.columns_mut(m * n, n).copy_from(&c.map(|z| z * a.conj()));
        }
        out
    }

    /// `A C A^H + η² I = (a a^H) ⊗ C + η² I`.
    pub fn out_cov(&self, c: &CMatrix) -> CMatrix {
        let n = self.dim;
        let nm = self.obs_len();
        let mut out = CMatrix::zeros(nm, nm);
        for (mi, ai) in self.pilots.iter().enumerate() {
            for (mj, aj) in self.pilots.iter().enumerate() {
                let s = ai * aj.conj();
                for p in 0..n {
                    for q in 0..n {
                        out[(mi * n + p, mj * n + q)] = s * c[(p, q)];
                    }
                }
            }
        }
        for i in 0..nm {
            out[(i, i)] += Complex64::new(self.noise_var, 0.0);
        }
        out
    }
}

/// Named pilot designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    /// Equidistant phases `π(m−1)/(2M)`.
    Optimal,
    /// All-ones sequence.
    Ones,
}

impl PilotKind {
    pub fn pilots(self, m: usize) -> CVector {
        match self {
            PilotKind::Optimal => optimal_pilots(m),
            PilotKind::Ones => all_ones_pilots(m),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PilotKind::Optimal => "optimal",
            PilotKind::Ones => "ones",
        }
    }
}

impl fmt::Display for PilotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PilotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(PilotKind::Optimal),
            "ones" => Ok(PilotKind::Ones),
            other => Err(Error::InvalidArgument(format!("unknown pilot kind `{other}`"))),
        }
    }
}

/// Pilot phases `ψ_m = π(m−1)/(2M)`, `m = 1..M`.
pub fn optimal_pilot_phases(m: usize) -> Vec<f64> {
    (0..m).map(|i| FRAC_PI_2 * i as f64 / m as f64).collect()
}

/// MSE-optimal noiseless pilots `[a]_m = exp(jψ_m)`.
pub fn optimal_pilots(m: usize) -> CVector {
    DVector::from_iterator(m, optimal_pilot_phases(m).into_iter().map(|p| Complex64::from_polar(1.0, p)))
}

pub fn all_ones_pilots(m: usize) -> CVector {
    DVector::from_element(m, Complex64::new(1.0, 0.0))
}

/// One-bit quantized observation with entries in `{(±1 ± j)/√2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedObservation {
    bits: CVector,
}

impl QuantizedObservation {
    /// Builds an observation from sign flags (`true` means `+`).
    pub fn from_signs(re_positive: &[bool], im_positive: &[bool]) -> Result<Self> {
        if re_positive.len() != im_positive.len() {
            return Err(Error::Dimension("real and imaginary sign lists differ in length".into()));
        }
        let sign = |b: bool| if b { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        let bits = DVector::from_iterator(
            re_positive.len(),
            re_positive.iter().zip(im_positive).map(|(&r, &i)| Complex64::new(sign(r), sign(i))),
        );
        Ok(Self { bits })
    }

    /// Enumerates all `4^len` patterns in a fixed order.
    pub fn enumerate(len: usize) -> impl Iterator<Item = QuantizedObservation> {
        (0u64..1u64 << (2 * len)).map(move |code| {
            let re: Vec<bool> = (0..len).map(|i| code >> i & 1 == 0).collect();
            let im: Vec<bool> = (0..len).map(|i| code >> (len + i) & 1 == 0).collect();
            QuantizedObservation::from_signs(&re, &im).expect("lengths match")
        })
    }

    pub fn bits(&self) -> &CVector {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Sign of the real part of entry `i` as `±1`.
    pub fn re_sign(&self, i: usize) -> f64 {
        self.bits[i].re.signum()
    }

    pub fn im_sign(&self, i: usize) -> f64 {
        self.bits[i].im.signum()
    }

    /// Compact hashable form (two bits per entry).
    pub fn key(&self) -> Vec<u8> {
        let mut key = vec![0u8; (2 * self.len()).div_ceil(8)];
        for (i, z) in self.bits.iter().enumerate() {
            if z.re > 0.0 {
                key[(2 * i) / 8] |= 1 << ((2 * i) % 8);
            }
            if z.im > 0.0 {
                key[(2 * i + 1) / 8] |= 1 << ((2 * i + 1) % 8);
            }
        }
        key
    }
}

#[inline]
fn sign_bit(x: f64) -> f64 {
    // sign(0) := +1
    if x < 0.0 {
        -FRAC_1_SQRT_2
    } else {
        FRAC_1_SQRT_2
    }
}

/// Entrywise `(sign(Re y) + j sign(Im y)) / √2`.
pub fn quantize(y: &CVector) -> QuantizedObservation {
    QuantizedObservation { bits: y.map(|z| Complex64::new(sign_bit(z.re), sign_bit(z.im))) }
}

/// One simulated draw of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub h: CVector,
    pub y: CVector,
    pub r: QuantizedObservation,
}

/// Draws `count` triples `(h, y, r)`; deterministic given `seed`.
pub fn simulate(prior: &GmmPrior, system: &SystemModel, count: usize, seed: u64) -> Result<Vec<Observation>> {
    if prior.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "prior dimension {} does not match system dimension {}",
            prior.dim(),
            system.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_std = system.noise_var().sqrt();
    let out = (0..count)
        .map(|_| {
            let h = prior.sample_with(&mut rng);
            let noise = standard_complex_normal(system.obs_len(), &mut rng);
            let y = system.apply(&h) + noise.scale(noise_std);
            let r = quantize(&y);
            Observation { h, y, r }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::CovarianceMatrix;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn quantize_examples() {
        let r = quantize(&DVector::from_vec(vec![c(3.0, -2.0)]));
        assert_eq!(r.bits()[0], c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2));
        let r = quantize(&DVector::from_vec(vec![c(0.0, 0.0)]));
        assert_eq!(r.bits()[0], c(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
    }

    #[test]
    fn quantized_entries_have_exact_modulus() {
        let y = DVector::from_fn(50, |i, _| c((i as f64 * 1.3).sin(), (i as f64 * 0.7).cos() - 0.2));
        for z in quantize(&y).bits().iter() {
            assert_eq!(z.re.abs(), FRAC_1_SQRT_2);
            assert_eq!(z.im.abs(), FRAC_1_SQRT_2);
        }
    }

    #[test]
    fn optimal_pilot_examples() {
        assert_eq!(optimal_pilots(1)[0], c(1.0, 0.0));
        let p2 = optimal_pilots(2);
        assert!((p2[1] - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-15);
        let phases: Vec<f64> = optimal_pilots(4).iter().map(|z| z.arg()).collect();
        for (got, want) in phases.iter().zip([0.0, PI / 8.0, PI / 4.0, 3.0 * PI / 8.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn pilot_power_and_phase_order() {
        for m in 1..40 {
            let a = optimal_pilots(m);
            assert!((a.norm_squared() - m as f64).abs() < 1e-9);
            let ph = optimal_pilot_phases(m);
            assert!(ph.windows(2).all(|w| w[0] < w[1]));
            assert!(ph[0] >= 0.0 && *ph.last().unwrap() < FRAC_PI_2);
            assert!((all_ones_pilots(m).norm_squared() - m as f64).abs() < 1e-12);
        }
        assert_eq!(all_ones_pilots(3), DVector::from_element(3, c(1.0, 0.0)));
        assert_eq!(all_ones_pilots(1), optimal_pilots(1));
    }

    #[test]
    fn power_constraint_is_enforced() {
        let bad = DVector::from_vec(vec![c(1.0, 0.0), c(0.5, 0.0)]);
        assert!(SystemModel::new(bad, 1.0, 1).is_err());
        assert!(SystemModel::new(optimal_pilots(2), -1.0, 1).is_err());
    }

    #[test]
    fn noiseless_passthrough() {
        let prior = GmmPrior::scalar(&[0.8, 0.2], &[0.0480769, 4.8076923]).unwrap();
        let system = SystemModel::new(optimal_pilots(1), 0.0, 1).unwrap();
        for obs in simulate(&prior, &system, 1000, 3).unwrap() {
            assert_eq!(obs.r, quantize(&obs.h));
        }
    }

    #[test]
    fn simulation_is_deterministic_and_checks_dims() {
        let prior = GmmPrior::scalar(&[1.0], &[1.0]).unwrap();
        let system = SystemModel::new(optimal_pilots(3), 0.5, 1).unwrap();
        assert_eq!(simulate(&prior, &system, 20, 9).unwrap(), simulate(&prior, &system, 20, 9).unwrap());
        let wide = SystemModel::new(optimal_pilots(3), 0.5, 2).unwrap();
        assert!(simulate(&prior, &wide, 1, 0).is_err());
    }

    #[test]
    fn real_part_sign_is_balanced() {
        let prior = GmmPrior::scalar(&[1.0], &[1.0]).unwrap();
        let system = SystemModel::new(optimal_pilots(1), 1.0, 1).unwrap();
        let n = 100_000;
        let pos = simulate(&prior, &system, n, 21).unwrap().iter().filter(|o| o.r.bits()[0].re > 0.0).count();
        let frac = pos as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((frac - 0.5).abs() <= 3.0 * se, "fraction {frac}");
    }

    #[test]
    fn kronecker_structure_matches_explicit_product() {
        let cov = crate::stats::random_covariance(3, 1.0, 4).unwrap();
        let system = SystemModel::new(optimal_pilots(2), 0.3, 3).unwrap();
        let a_mat = crate::linalg::kron(
            &CMatrix::from_column_slice(2, 1, system.pilots().as_slice()),
            &CMatrix::identity(3, 3),
        );
        let explicit = &a_mat * cov.matrix() * a_mat.adjoint() + CMatrix::identity(6, 6).scale(0.3);
        assert!(crate::linalg::max_abs(&(explicit - system.out_cov(cov.matrix()))) < 1e-14);
        let explicit_cross = cov.matrix() * a_mat.adjoint();
        assert!(crate::linalg::max_abs(&(explicit_cross - system.right_adjoint(cov.matrix()))) < 1e-14);
        let h = DVector::from_fn(3, |i, _| c(i as f64, 1.0));
        assert!((&a_mat * &h - system.apply(&h)).norm() < 1e-14);
        let _ = CovarianceMatrix::scalar(1.0);
    }

    #[test]
    fn enumeration_covers_all_patterns() {
        let keys: std::collections::HashSet<Vec<u8>> = QuantizedObservation::enumerate(3).map(|r| r.key()).collect();
        assert_eq!(keys.len(), 64);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cvec() -> impl Strategy<Value = CVector> {
            prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..16)
                .prop_map(|v| DVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| c(a, b))))
        }

        proptest! {
            #[test]
            fn positive_scaling_invariance(y in cvec(), alpha in 1e-6f64..1e6) {
                prop_assert_eq!(quantize(&y.scale(alpha)), quantize(&y));
            }

            #[test]
            fn antisymmetry(y in cvec()) {
                prop_assume!(y.iter().all(|z| z.re != 0.0 && z.im != 0.0));
                let neg = quantize(&(-&y));
                prop_assert_eq!(neg.bits().clone(), -quantize(&y).bits());
            }
        }
    }
}
