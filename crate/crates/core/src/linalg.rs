//! Dense linear-algebra glue between `ndarray` containers and `nalgebra`
//! factorizations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};

pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Minimum-norm least squares via SVD; tolerates rank deficiency.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, eps).expect("u and v were computed")
}

/// Solves `(AᵀA + λ diag(mask)) x = Aᵀb`. Columns with `mask = false` are not
/// penalized. Falls back to SVD when the normal equations are not positive
/// definite.
pub fn ridge_solve(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, mask: &[bool]) -> DVector<f64> {
    let mut g = a.transpose() * a;
    for (k, &m) in mask.iter().enumerate() {
        if m {
            g[(k, k)] += lambda;
        }
    }
    let rhs = a.transpose() * b;
    match g.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => lstsq(&g, &rhs),
    }
}

/// Cholesky with escalating diagonal jitter, from `start` up to `max`
/// (factor 10 per attempt). Returns the factor and the jitter used.
pub fn cholesky_jitter(
    k: &DMatrix<f64>,
    start: f64,
    max: f64,
) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64)> {
    if let Some(ch) = k.clone().cholesky() {
        return Some((ch, 0.0));
    }
    let mut jitter = start;
    while jitter <= max * (1.0 + 1e-12) {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(ch) = kj.cholesky() {
            return Some((ch, jitter));
        }
        jitter *= 10.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lstsq_handles_duplicate_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, 6.0]);
        let x = lstsq(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let k = DMatrix::from_element(2, 2, 1.0);
        let (_, j) = cholesky_jitter(&k, 1e-10, 1e-6).unwrap();
        assert!(j > 0.0 && j <= 1e-6);
    }
}
