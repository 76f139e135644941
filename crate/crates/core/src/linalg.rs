//! Small dense helpers shared by the Gaussian, Kalman and GMVI code.

use nalgebra::{Cholesky, DMatrix};

/// Lower Cholesky factor of `c`.
///
/// One retry is allowed after symmetrizing and adding `1e-12·tr(C)/N·I`;
/// a second failure returns `None`.
pub(crate) fn cholesky_with_jitter(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if !c.is_square() || c.nrows() == 0 || c.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(l) = checked_cholesky(c.clone()) {
        return Some(l);
    }
    let n = c.nrows();
    let mut sym = symmetrized(c);
    let jitter = 1e-12 * sym.trace() / n as f64;
    if !(jitter > 0.0) {
        return None;
    }
    for i in 0..n {
        sym[(i, i)] += jitter;
    }
    checked_cholesky(sym)
}

fn checked_cholesky(c: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(c)?.unpack();
    (0..l.nrows())
        .all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite())
        .then_some(l)
}

pub(crate) fn symmetrized(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

/// `ln det(L Lᵀ)` for a lower-triangular factor with positive diagonal.
pub(crate) fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Solves `L z = b` in place by forward substitution.
pub(crate) fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let mut acc = b[i];
        for j in 0..i {
            acc -= l[(i, j)] * b[j];
        }
        b[i] = acc / l[(i, i)];
    }
}

/// Solves `(L Lᵀ) X = B` column by column.
pub(crate) fn cholesky_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    l.solve_lower_triangular_mut(&mut x);
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// Inverse of `L Lᵀ`, symmetrized.
pub(crate) fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    symmetrized(&cholesky_solve(l, &DMatrix::identity(n, n)))
}

/// Numerically stable `ln Σ exp(v_i)`; returns `-inf` when every entry is `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn jitter_rescues_roundoff_semidefinite() {
        // rank-one plus a perturbation at round-off scale
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let mut c = &v * v.transpose();
        c[(1, 1)] -= 1e-15;
        assert!(checked_cholesky(c.clone()).is_none());
        assert!(cholesky_with_jitter(&c).is_some());
    }

    #[test]
    fn genuine_indefinite_matrix_is_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_with_jitter(&c).is_none());
        assert!(cholesky_with_jitter(&DMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[-1e6, 0.5]), 0.5);
        assert!((logsumexp(&[700.0, 700.0]) - (700.0 + 2f64.ln())).abs() < 1e-12);
    }
}
