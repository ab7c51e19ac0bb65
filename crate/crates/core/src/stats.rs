//! Zero-mean complex Gaussian mixture priors.
//!
//! A prior is a list of `(p_k, C_k)` pairs. All sampling uses the circularly
//! symmetric convention: a variance-`σ²` scalar has independent real and
//! imaginary parts with variance `σ²/2` each, so that `E|h|² = σ²`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_part, CMatrix, CVector};

/// Relative tolerance on the smallest eigenvalue, scaled by the trace.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Weight sums further than this from one are rejected instead of renormalized.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Hermitian positive semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: CMatrix,
}

impl CovarianceMatrix {
    /// Validates `matrix` and stores its Hermitian part.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        let matrix = hermitian_part(&matrix);
        let trace: f64 = matrix.diagonal().iter().map(|z| z.re).sum();
        let min_eig = hermitian_eigenvalues(&matrix)[0];
        let tol = PSD_TOLERANCE * trace.abs();
        if min_eig < -tol {
            return Err(Error::NotPsd { min_eig, tol });
        }
        Ok(Self { matrix })
    }

    /// `var · I_dim`.
    pub fn scaled_identity(dim: usize, var: f64) -> Result<Self> {
        if var < 0.0 || !var.is_finite() {
            return Err(Error::InvalidArgument(format!("variance must be finite and >= 0, got {var}")));
        }
        Self::new(CMatrix::identity(dim, dim).scale(var))
    }

    /// 1×1 covariance holding a scalar variance.
    pub fn scalar(var: f64) -> Result<Self> {
        Self::scaled_identity(1, var)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_inner(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Multiplies every entry by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        Self { matrix: self.matrix.scale(factor) }
    }

    /// A factor `F` with `F F^H = C`, built from the eigendecomposition so that
    /// rank-deficient covariances are handled.
    fn sampling_factor(&self) -> CMatrix {
        if self.dim() == 1 {
            return CMatrix::from_element(1, 1, Complex64::new(self.matrix[(0, 0)].re.max(0.0).sqrt(), 0.0));
        }
        let eig = self.matrix.clone().symmetric_eigen();
        let mut f = eig.eigenvectors;
        for (j, lambda) in eig.eigenvalues.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            f.column_mut(j).scale_mut(s);
        }
        f
    }
}

/// Variance summary of a scalar mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGmmStats {
    /// `σ_glob² = Σ p_k σ_k²`.
    pub sigma_glob_sq: f64,
    /// `σ̄ = Σ p_k σ_k`.
    pub sigma_bar: f64,
}

/// Zero-mean complex Gaussian mixture `Σ_k p_k CN(0, C_k)`.
#[derive(Debug, Clone)]
pub struct GmmPrior {
    weights: Vec<f64>,
    covs: Vec<CovarianceMatrix>,
    factors: Vec<CMatrix>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, covs: Vec<CovarianceMatrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Weights("at least one component is required".into()));
        }
        if weights.len() != covs.len() {
            return Err(Error::Dimension(format!("{} weights but {} covariances", weights.len(), covs.len())));
        }
        let dim = covs[0].dim();
        if let Some(c) = covs.iter().find(|c| c.dim() != dim) {
            return Err(Error::Dimension(format!(
                "component covariances disagree on dimension ({} vs {})",
                dim,
                c.dim()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Weights(format!("weights must be strictly positive, got {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Weights(format!("weights sum to {sum}, expected 1")));
        }
        let weights = weights.into_iter().map(|w| w / sum).collect();
        let factors = covs.iter().map(CovarianceMatrix::sampling_factor).collect();
        Ok(Self { weights, covs, factors })
    }

    /// Scalar mixture from weights and component variances.
    pub fn scalar(weights: &[f64], variances: &[f64]) -> Result<Self> {
        let covs = variances.iter().map(|&v| CovarianceMatrix::scalar(v)).collect::<Result<Vec<_>>>()?;
        Self::new(weights.to_vec(), covs)
    }

    /// Single-component (Gaussian) prior.
    pub fn gaussian(cov: CovarianceMatrix) -> Self {
        Self::new(vec![1.0], vec![cov]).expect("single unit-weight component is always valid")
    }

    pub fn dim(&self) -> usize {
        self.covs[0].dim()
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covs(&self) -> &[CovarianceMatrix] {
        &self.covs
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, &CovarianceMatrix)> {
        self.weights.iter().copied().zip(self.covs.iter())
    }

    /// `C_h = Σ_k p_k C_k`.
    pub fn global_cov(&self) -> CovarianceMatrix {
        let n = self.dim();
        let mut acc = CMatrix::zeros(n, n);
        for (p, c) in self.components() {
            acc += c.matrix().scale(p);
        }
        CovarianceMatrix { matrix: hermitian_part(&acc) }
    }

    /// Component variances `σ_k²` of a scalar prior.
    pub fn component_variances(&self) -> Result<Vec<f64>> {
        self.require_scalar()?;
        Ok(self.covs.iter().map(|c| c.matrix()[(0, 0)].re).collect())
    }

    pub fn scalar_stats(&self) -> Result<ScalarGmmStats> {
        let vars = self.component_variances()?;
        let sigma_glob_sq = self.weights.iter().zip(&vars).map(|(p, v)| p * v).sum();
        let sigma_bar = self.weights.iter().zip(&vars).map(|(p, v)| p * v.sqrt()).sum();
        Ok(ScalarGmmStats { sigma_glob_sq, sigma_bar })
    }

    /// The Gaussian `CN(0, C_h)` with the same global covariance.
    pub fn mismatched_gaussian(&self) -> Self {
        Self::gaussian(self.global_cov())
    }

    /// Same mixture with every covariance multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let covs = self.covs.iter().map(|c| c.scaled(factor)).collect();
        Self::new(self.weights.clone(), covs).expect("scaling preserves validity")
    }

    /// Rescales so that `tr(C_h) / N = 1` (σ_glob² = 1 for scalar priors).
    pub fn normalized(&self) -> Self {
        let per_entry = self.global_cov().trace() / self.dim() as f64;
        self.scaled(1.0 / per_entry)
    }

    fn require_scalar(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::Dimension(format!("scalar prior required, got N = {}", self.dim())));
        }
        Ok(())
    }

    /// Index of the component selected by a uniform draw.
    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    /// Draws one sample: a component index first, then `CN(0, C_k)`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let k = self.pick_component(rng);
        let z = standard_complex_normal(self.dim(), rng);
        &self.factors[k] * z
    }
}

/// Vector of i.i.d. `CN(0, 1)` entries.
pub fn standard_complex_normal<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    DVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// `count` independent draws from `prior`, reproducible from `seed`.
pub fn sample_prior(prior: &GmmPrior, count: usize, seed: u64) -> Vec<CVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| prior.sample_with(&mut rng)).collect()
}

/// Random Hermitian positive definite matrix with trace `scale · dim`.
///
/// Eigenvectors come from the QR factorization of a complex Gaussian matrix,
/// eigenvalues are uniform on `(0, 1]` and then rescaled to the trace target.
pub fn random_covariance(dim: usize, scale: f64, seed: u64) -> Result<CovarianceMatrix> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let q = g.qr().q();
    let mut eig: Vec<f64> = (0..dim).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = eig.iter().sum();
    let target = scale * dim as f64;
    eig.iter_mut().for_each(|l| *l *= target / total);

    let mut scaled_q = q.clone();
    for (j, l) in eig.iter().enumerate() {
        scaled_q.column_mut(j).scale_mut(*l);
    }
    let c = hermitian_part(&(scaled_q * q.adjoint()));
    CovarianceMatrix::new(c)
}
