//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Diagonal jitter added once when a Hermitian Cholesky factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Conjugate-symmetric part `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == Complex64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Solves `h x = rhs` for Hermitian positive definite `h`.
///
/// Falls back to a single retry with [`CHOLESKY_JITTER`] (relative to the mean
/// diagonal) on the diagonal before giving up.
pub fn hermitian_solve(h: &CMatrix, rhs: &CMatrix, what: &str) -> Result<CMatrix> {
    if let Some(chol) = positive_cholesky(h.clone()) {
        return Ok(chol.solve(rhs));
    }
    let n = h.nrows();
    let scale = (h.diagonal().iter().map(|z| z.re).sum::<f64>() / n as f64).max(f64::MIN_POSITIVE);
    let mut jittered = h.clone();
    for i in 0..n {
        jittered[(i, i)] += Complex64::new(CHOLESKY_JITTER * scale, 0.0);
    }
    positive_cholesky(jittered).map(|chol| chol.solve(rhs)).ok_or_else(|| Error::Singular(what.to_string()))
}

/// Complex Cholesky accepts negative pivots (taking an imaginary square
/// root), so the factor's diagonal is checked explicitly.
fn positive_cholesky(h: CMatrix) -> Option<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = h.cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(chol)
}

/// `x h^{-1}` for Hermitian positive definite `h`, computed as `(h^{-1} x^H)^H`.
pub fn right_divide_hermitian(x: &CMatrix, h: &CMatrix, what: &str) -> Result<CMatrix> {
    Ok(hermitian_solve(h, &x.adjoint(), what)?.adjoint())
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_shapes_and_entries() {
        let a = CMatrix::from_row_slice(2, 1, &[c(1.0, 0.0), c(0.0, 1.0)]);
        let b = CMatrix::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (4, 2));
        assert_eq!(k[(2, 0)], c(0.0, 1.0));
        assert_eq!(k[(3, 1)], c(0.0, 1.0));
        assert_eq!(k[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn solve_recovers_identity() {
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.0, 0.0)]);
        let x = hermitian_solve(&h, &h, "test").unwrap();
        assert!(max_abs(&(x - CMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let h = CMatrix::from_element(2, 2, c(1.0, 0.0)) * c(-1.0, 0.0);
        assert!(hermitian_solve(&h, &CMatrix::identity(2, 2), "neg").is_err());
    }
}
