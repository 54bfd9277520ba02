//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::RMat;

/// Natural log-determinant of a symmetric positive definite matrix, or `None`
/// if the Cholesky factorization fails.
pub fn logdet_spd(m: &RMat) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Log-determinant and inverse of an SPD matrix from a single factorization.
pub fn logdet_and_inverse_spd(m: &RMat) -> Option<(f64, RMat)> {
    let chol = Cholesky::new(m.clone())?;
    let mut acc = 0.0;
    {
        let l = chol.l_dirty();
        for i in 0..m.nrows() {
            let d = l[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            acc += d.ln();
        }
    }
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Some((2.0 * acc, inv))
}

pub fn inverse_spd(m: &RMat) -> Option<RMat> {
    logdet_and_inverse_spd(m).map(|(_, inv)| inv)
}

pub fn symmetrize_in_place(m: &mut RMat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &RMat) -> RMat {
    let mut out = m.clone();
    symmetrize_in_place(&mut out);
    out
}

/// Frobenius inner product `tr(aᵀ b)`.
pub fn frob_dot(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero first.
pub fn psd_sqrt(m: &RMat) -> RMat {
    let eig = SymmetricEigen::new(symmetrized(m));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut out = &eig.eigenvectors * RMat::from_diagonal(&roots) * eig.eigenvectors.transpose();
    symmetrize_in_place(&mut out);
    out
}

pub fn min_eigenvalue(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrized(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `a · b · aᵀ` for a symmetric middle factor.
pub fn sandwich(a: &RMat, b: &RMat) -> RMat {
    let mut out = a * b * a.transpose();
    symmetrize_in_place(&mut out);
    out
}
