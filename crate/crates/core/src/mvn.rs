//! Normal probability kernels.
//!
//! Scalar CDF (and its logarithm), the bivariate orthant closed form, and a
//! randomized-lattice QMC routine for rectangle probabilities of a zero-mean
//! multivariate normal. The rectangle routine follows the usual
//! separation-of-variables approach: greedy variable reordering during the
//! Cholesky factorization, sequential conditioning, and a Richtmyer lattice
//! with random shifts for an unbiased error estimate.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::QuantizedObservation;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Number of independent random shifts used by [`mvn_rectangle`].
pub const NUM_SHIFTS: usize = 12;

/// Largest supported dimension of [`mvn_rectangle`].
pub const MAX_DIM: usize = 25;

/// Standard normal CDF `Φ(x) = erfc(−x/√2)/2`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        // Φ(x) = 1 − Φ(−x) keeps full relative precision of the small tail.
        libm::log1p(-0.5 * libm::erfc(x * FRAC_1_SQRT_2))
    } else if x > -37.0 {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Asymptotic (Mills ratio) expansion, relative error below 1e-12 here.
        let z2 = 1.0 / (x * x);
        let series = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)));
        -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse standard normal CDF (Wichura, AS 241, about 1e-16 relative accuracy).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `P(X > 0, Y > 0)` for unit-variance normals with correlation `rho`.
///
/// `rho` is clamped to `[−1, 1]`.
pub fn bivariate_orthant(rho: f64) -> f64 {
    0.25 + rho.clamp(-1.0, 1.0).asin() / (2.0 * PI)
}

/// Rectangle probability `P(lower ≤ X ≤ upper)` for `X ~ N(0, cov)`.
#[derive(Debug, Clone)]
pub struct RectangleProblem {
    pub cov: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// Total lattice points, spread over [`NUM_SHIFTS`] shifts.
    pub samples: usize,
    pub seed: u64,
}

impl RectangleProblem {
    fn validate(&self) -> Result<()> {
        let d = self.cov.nrows();
        if d == 0 || d > MAX_DIM || !self.cov.is_square() {
            return Err(Error::Dimension(format!("covariance must be square with 1 <= d <= {MAX_DIM}")));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Dimension("bounds must have the covariance dimension".into()));
        }
        if self.lower.iter().zip(self.upper.iter()).any(|(l, u)| !(l < u) || l.is_nan() || u.is_nan()) {
            return Err(Error::InvalidArgument("degenerate interval: require lower < upper".into()));
        }
        let scale = self.cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("covariance must be symmetric".into()));
                }
            }
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("need at least one QMC point".into()));
        }
        Ok(())
    }
}

/// Reordered Cholesky factor and permuted bounds.
struct Prepared {
    chol: DMatrix<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn truncated_mean(a: f64, b: f64) -> f64 {
    let mass = std_normal_cdf(b) - std_normal_cdf(a);
    if mass <= 1e-300 {
        // whole mass beyond one bound
        return if a.is_finite() && (!b.is_finite() || a.abs() < b.abs()) { a } else { b };
    }
    (std_normal_pdf(a) - std_normal_pdf(b)) / mass
}

fn prepare(problem: &RectangleProblem) -> Result<Prepared> {
    let d = problem.cov.nrows();
    let mut cov = problem.cov.clone();
    let mut lower: Vec<f64> = problem.lower.iter().copied().collect();
    let mut upper: Vec<f64> = problem.upper.iter().copied().collect();
    let mut chol = DMatrix::<f64>::zeros(d, d);
    let mut y = vec![0.0; d];
    let tol = 1e-12 * cov.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));

    for i in 0..d {
        // Pick the remaining variable with the smallest expected interval mass.
        let mut best = i;
        let mut best_mass = f64::INFINITY;
        for j in i..d {
            let shift: f64 = (0..i).map(|k| chol[(j, k)] * y[k]).sum();
            let var = cov[(j, j)] - (0..i).map(|k| chol[(j, k)].powi(2)).sum::<f64>();
            if var < -tol {
                return Err(Error::NotPsd { min_eig: var, tol });
            }
            let sd = var.max(0.0).sqrt();
            let mass = if sd > 0.0 {
                std_normal_cdf((upper[j] - shift) / sd) - std_normal_cdf((lower[j] - shift) / sd)
            } else {
                1.0
            };
            if mass < best_mass {
                best_mass = mass;
                best = j;
            }
        }
        if best != i {
            cov.swap_rows(i, best);
            cov.swap_columns(i, best);
            chol.swap_rows(i, best);
            lower.swap(i, best);
            upper.swap(i, best);
        }
        let var = cov[(i, i)] - (0..i).map(|k| chol[(i, k)].powi(2)).sum::<f64>();
        if var < -tol {
            return Err(Error::NotPsd { min_eig: var, tol });
        }
        let pivot = var.max(0.0).sqrt();
        chol[(i, i)] = pivot;
        for j in i + 1..d {
            let s = cov[(j, i)] - (0..i).map(|k| chol[(j, k)] * chol[(i, k)]).sum::<f64>();
            chol[(j, i)] = if pivot > tol.sqrt() { s / pivot } else { 0.0 };
        }
        let shift: f64 = (0..i).map(|k| chol[(i, k)] * y[k]).sum();
        y[i] = if pivot > 0.0 { truncated_mean((lower[i] - shift) / pivot, (upper[i] - shift) / pivot) } else { 0.0 };
    }
    Ok(Prepared { chol, lower, upper })
}

impl Prepared {
    /// Sequential-conditioning integrand at `w ∈ [0,1)^(d−1)`.
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let d = self.lower.len();
        let mut value = 1.0;
        for i in 0..d {
            let shift: f64 = (0..i).map(|k| self.chol[(i, k)] * y[k]).sum();
            let pivot = self.chol[(i, i)];
            let (lo, hi) = if pivot > 0.0 {
                (std_normal_cdf((self.lower[i] - shift) / pivot), std_normal_cdf((self.upper[i] - shift) / pivot))
            } else if self.lower[i] <= shift && shift <= self.upper[i] {
                (0.0, 1.0)
            } else {
                (0.0, 0.0)
            };
            value *= hi - lo;
            if value <= 0.0 {
                return 0.0;
            }
            if i + 1 < d {
                let u = (lo + w[i] * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
                y[i] = std_normal_quantile(u);
            }
        }
        value
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|p| **p * **p <= candidate).all(|p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Estimates the rectangle probability; returns `(probability, error_estimate)`
/// with the error taken as three standard deviations of the per-shift estimates.
pub fn mvn_rectangle(problem: &RectangleProblem) -> Result<(f64, f64)> {
    problem.validate()?;
    let prepared = prepare(problem)?;
    let d = problem.cov.nrows();
    if d == 1 {
        let s = prepared.chol[(0, 0)];
        let p = std_normal_cdf(prepared.upper[0] / s) - std_normal_cdf(prepared.lower[0] / s);
        return Ok((p, 0.0));
    }

    let dims = d - 1;
    let generators: Vec<f64> = first_primes(dims).into_iter().map(|p| (p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let shifts: Vec<Vec<f64>> = (0..NUM_SHIFTS).map(|_| (0..dims).map(|_| rng.random::<f64>()).collect()).collect();
    let points = problem.samples.div_ceil(NUM_SHIFTS).max(1);

    let estimates: Vec<f64> = shifts
        .par_iter()
        .map(|shift| {
            let mut w = vec![0.0; dims];
            let mut w_anti = vec![0.0; dims];
            let mut y = vec![0.0; d];
            let mut sum = 0.0;
            for k in 1..=points {
                for j in 0..dims {
                    let x = (k as f64 * generators[j] + shift[j]).fract();
                    // tent periodization plus antithetic pair
                    let t = (2.0 * x - 1.0).abs();
                    w[j] = t;
                    w_anti[j] = 1.0 - t;
                }
                sum += 0.5 * (prepared.integrand(&w, &mut y) + prepared.integrand(&w_anti, &mut y));
            }
            sum / points as f64
        })
        .collect();

    let s = NUM_SHIFTS as f64;
    let mean = estimates.iter().sum::<f64>() / s;
    let spread = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (s - 1.0);
    Ok((mean.clamp(0.0, 1.0), 3.0 * spread.sqrt()))
}

/// Real composite covariance `½[[Re C, −Im C], [Im C, Re C]]` of `(Re y, Im y)`
/// for a circularly symmetric `y ~ CN(0, C)`.
pub fn composite_real_cov(c: &CMatrix) -> DMatrix<f64> {
    let n = c.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = c[(i, j)];
            out[(i, j)] = 0.5 * z.re;
            out[(n + i, n + j)] = 0.5 * z.re;
            out[(i, n + j)] = -0.5 * z.im;
            out[(n + i, j)] = 0.5 * z.im;
        }
    }
    out
}

/// `P(Q(y) = r)` for `y ~ CN(0, c_y)`, i.e. the orthant probability selected by
/// the sign pattern of `r`.
pub fn quantized_pattern_probability(
    c_y: &CMatrix,
    r: &QuantizedObservation,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = c_y.nrows();
    if r.len() != n {
        return Err(Error::Dimension(format!("pattern length {} vs covariance size {n}", r.len())));
    }
    let bound = |positive: bool| {
        if positive {
            (0.0, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, 0.0)
        }
    };
    let mut lower = DVector::zeros(2 * n);
    let mut upper = DVector::zeros(2 * n);
    for i in 0..n {
        let (l, u) = bound(r.re_sign(i) > 0.0);
        lower[i] = l;
        upper[i] = u;
        let (l, u) = bound(r.im_sign(i) > 0.0);
        lower[n + i] = l;
        upper[n + i] = u;
    }
    mvn_rectangle(&RectangleProblem { cov: composite_real_cov(c_y), lower, upper, samples, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn cdf_matches_series_oracle() {
        // Φ(x) = 1/2 + φ(x) Σ x^(2n+1)/(2n+1)!!, summed to convergence.
        for &x in &[-3.0, -1.5, -0.3, 0.1, 0.8, 2.0, 3.5] {
            let mut term: f64 = x;
            let mut sum = x;
            let mut n = 0.0;
            while term.abs() > 1e-300 && n < 400.0 {
                n += 1.0;
                term *= x * x / (2.0 * n + 1.0);
                sum += term;
            }
            let series = 0.5 + std_normal_pdf(x) * sum;
            assert!((std_normal_cdf(x) - series).abs() < 2e-15, "x = {x}");
        }
    }

    #[test]
    fn log_cdf_is_continuous_and_accurate() {
        for &x in &[-36.9, -20.0, -5.0, -0.5, 0.0, 0.5, 5.0, 9.0] {
            let direct = if x < 3.0 {
                std_normal_cdf(x).ln()
            } else {
                // ln(1 − t) series; the direct log would cancel.
                let t = std_normal_cdf(-x);
                -t - t * t / 2.0 - t * t * t / 3.0
            };
            assert!((log_std_normal_cdf(x) - direct).abs() <= 1e-12 * direct.abs().max(1e-16), "x = {x}");
        }
        let a = log_std_normal_cdf(-37.0 + 1e-9);
        let b = log_std_normal_cdf(-37.0 - 1e-9);
        assert!((a - b).abs() / a.abs() < 1e-9);
        assert!(log_std_normal_cdf(-1e4).is_finite());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-12, 0.01, 0.3, 0.5, 0.77, 0.975, 1.0 - 1e-12] {
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() <= 1e-13 * p.max(1e-3), "p = {p}");
        }
    }

    #[test]
    fn orthant_examples() {
        assert_eq!(bivariate_orthant(0.0), 0.25);
        assert!((bivariate_orthant(1.0) - 0.5).abs() < 1e-16);
        assert!((bivariate_orthant(0.5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sign_correlation_identity() {
        for i in -20..=20 {
            let rho = i as f64 / 20.0;
            let lhs = 2.0 / PI * rho.asin();
            assert!((lhs - (4.0 * bivariate_orthant(rho) - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn orthants_sum_to_one() {
        for &rho in &[-0.95, -0.3, 0.0, 0.4, 0.99] {
            let total = 2.0 * bivariate_orthant(rho) + 2.0 * bivariate_orthant(-rho);
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    fn problem(cov: DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>, samples: usize) -> RectangleProblem {
        RectangleProblem { cov, lower: DVector::from_vec(lower), upper: DVector::from_vec(upper), samples, seed: 17 }
    }

    #[test]
    fn one_dimensional_half_line() {
        let (p, _) = mvn_rectangle(&problem(DMatrix::identity(1, 1), vec![0.0], vec![f64::INFINITY], 100)).unwrap();
        assert!((p - 0.5).abs() < 1e-10);
    }

    #[test]
    fn bivariate_rectangle_matches_closed_form() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let (p, err) =
            mvn_rectangle(&problem(cov, vec![0.0, 0.0], vec![f64::INFINITY, f64::INFINITY], 1 << 14)).unwrap();
        assert!((p - 1.0 / 3.0).abs() <= err.max(1e-12), "p = {p}, err = {err}");
        assert!(err <= 1e-3);
    }

    #[test]
    fn four_quadrants_sum_to_one() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 2.0, 0.4, -0.2, 0.4, 0.5]);
        let inf = f64::INFINITY;
        let mut total = 0.0;
        for code in 0..8u32 {
            let bound = |bit: u32| {
                if code >> bit & 1 == 1 {
                    (0.0, inf)
                } else {
                    (-inf, 0.0)
                }
            };
            let (l0, u0) = bound(0);
            let (l1, u1) = bound(1);
            let (l2, u2) = bound(2);
            total += mvn_rectangle(&problem(cov.clone(), vec![l0, l1, l2], vec![u0, u1, u2], 4096)).unwrap().0;
        }
        assert!((total - 1.0).abs() < 1e-3, "total {total}");
    }

    #[test]
    fn error_shrinks_with_more_points() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 1.0, 0.5, 0.3, 0.5, 1.0]);
        let run = |n| mvn_rectangle(&problem(cov.clone(), vec![-1.0, -0.5, 0.0], vec![1.0, 2.0, 1.5], n)).unwrap().1;
        let coarse = run(1 << 12);
        let fine = run(1 << 16);
        // 16x the points; plain Monte Carlo would only gain a factor of 4.
        assert!(fine < coarse / 4.0, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn validation_errors() {
        let inf = f64::INFINITY;
        let bad_interval = problem(DMatrix::identity(2, 2), vec![0.0, 1.0], vec![inf, 1.0], 10);
        assert!(mvn_rectangle(&bad_interval).is_err());
        let not_psd = problem(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), vec![0.0, 0.0], vec![inf, inf], 10);
        assert!(matches!(mvn_rectangle(&not_psd), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn deterministic_given_seed() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, -0.7, -0.7, 1.0]);
        let p = problem(cov, vec![-1.0, 0.0], vec![0.5, f64::INFINITY], 2048);
        assert_eq!(mvn_rectangle(&p).unwrap(), mvn_rectangle(&p).unwrap());
    }
}
