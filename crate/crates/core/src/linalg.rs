//! Small dense symmetric-matrix helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Dense row-major-addressable matrix used for Hessians and covariances.
pub type Matrix = DMatrix<f64>;

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub(crate) fn eigenvalues(m: &Matrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().copied().collect()
}

/// Ratio of extreme absolute eigenvalues; infinite when the smallest is zero.
pub(crate) fn condition_number(m: &Matrix) -> f64 {
    let ev = eigenvalues(m);
    let max = ev.iter().fold(0.0f64, |a, &b| a.max(libm::fabs(b)));
    let min = ev.iter().fold(f64::INFINITY, |a, &b| a.min(libm::fabs(b)));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Clips negative eigenvalues to zero. Returns the projection and whether
/// anything was clipped.
pub(crate) fn psd_project(m: &Matrix) -> (Matrix, bool) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clipped = eig.eigenvalues.iter().any(|&l| l < 0.0);
    if !clipped {
        return (symmetrize(m), false);
    }
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&vals) * v.transpose();
    (symmetrize(&out), true)
}

/// Solves `h x = b` for symmetric positive (semi-)definite `h`.
///
/// Falls back to `h + 1e-10 tr(h) I` when the Cholesky factorization fails.
/// The boolean reports whether the ridge was needed.
pub(crate) fn solve_spd(h: &Matrix, b: &[f64]) -> Option<(Vec<f64>, bool)> {
    let rhs = DVector::from_column_slice(b);
    if let Some(ch) = h.clone().cholesky() {
        let x = ch.solve(&rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some((x.iter().copied().collect(), false));
        }
    }
    let ridge = 1e-10 * h.trace().abs().max(f64::MIN_POSITIVE);
    let n = h.nrows();
    let reg = h + DMatrix::identity(n, n) * ridge;
    let ch = reg.cholesky()?;
    let x = ch.solve(&rhs);
    if x.iter().all(|v| v.is_finite()) {
        Some((x.iter().copied().collect(), true))
    } else {
        None
    }
}

pub(crate) fn inverse_spd(h: &Matrix) -> Option<Matrix> {
    let ch = h.clone().cholesky()?;
    Some(symmetrize(&ch.inverse()))
}
