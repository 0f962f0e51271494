use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{FeaturesError, Result};

/// Principal components of column-centered data.
///
/// `components` holds one unit-norm loading vector per row; the entry of
/// largest magnitude in each row is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub means: Array1<f64>,
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub total_variance: f64,
}

pub fn fit_pca(x: ArrayView2<'_, f64>, n_components: usize) -> Result<Pca> {
    let (n, p) = x.dim();
    if n_components == 0 || n_components > n.min(p) {
        return Err(FeaturesError::InvalidComponents { requested: n_components, max: n.min(p) });
    }
    let means = x.mean_axis(Axis(0)).expect("n > 0");
    let centered = &x - &means.view().insert_axis(Axis(0));
    let m = DMatrix::from_fn(n, p, |i, j| centered[[i, j]]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let dof = (n.max(2) - 1) as f64;
    let total_variance = s.iter().map(|v| v * v).sum::<f64>() / dof;
    let mut components = Array2::zeros((n_components, p));
    let mut explained = Array1::zeros(n_components);
    for (r, &k) in order.iter().take(n_components).enumerate() {
        let row = vt.row(k);
        let (mut best, mut sign) = (0.0f64, 1.0);
        for &v in row.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        for j in 0..p {
            components[[r, j]] = sign * row[j];
        }
        explained[r] = s[k] * s[k] / dof;
    }
    Ok(Pca { means, components, explained_variance: explained, total_variance })
}

impl Pca {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let centered = &x - &self.means.view().insert_axis(Axis(0));
        centered.dot(&self.components.t())
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        z.dot(&self.components) + self.means.view().insert_axis(Axis(0))
    }

    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        if self.total_variance > 0.0 {
            &self.explained_variance / self.total_variance
        } else {
            Array1::zeros(self.n_components())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut r = crate::rng::seeded(seed);
        Array2::from_shape_fn((n, p), |_| r.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn one_axis_data_is_one_component() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| (i as f64 - 7.0) * [1.0, -2.0, 0.5][j] + 4.0);
        let pca = fit_pca(x.view(), 3).unwrap();
        assert!((pca.explained_variance_ratio()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthonormal_components_via_gram_matrix() {
        let x = random(50, 10, 3);
        let pca = fit_pca(x.view(), 10).unwrap();
        let c = &pca.components;
        for a in 0..10 {
            for b in 0..10 {
                let dot: f64 = (0..10).map(|k| c[[a, k]] * c[[b, k]]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_rank_reconstruction_and_variance_order() {
        let x = random(40, 6, 9);
        let pca = fit_pca(x.view(), 6).unwrap();
        let z = pca.transform(x.view());
        let back = pca.inverse_transform(z.view());
        let err = (&back - &x).mapv(|v| v * v).sum().sqrt() / x.mapv(|v| v * v).sum().sqrt();
        assert!(err <= 1e-8);
        let var = z.var_axis(Axis(0), 1.0);
        assert!(var.windows(2).into_iter().all(|w| w[0] >= w[1] - 1e-12));
        let zm = pca.transform(pca.means.view().insert_axis(Axis(0)));
        assert!(zm.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn sign_convention_and_bounds() {
        let x = random(20, 5, 1);
        let pca = fit_pca(x.view(), 3).unwrap();
        for row in pca.components.rows() {
            let m = row.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(m > 0.0);
        }
        assert!(fit_pca(x.view(), 6).is_err());
        assert!(fit_pca(x.view(), 0).is_err());
    }

    #[test]
    fn rank_deficient_has_trailing_zero_variance() {
        let base = random(25, 2, 4);
        let x = Array2::from_shape_fn((25, 4), |(i, j)| match j {
            0 | 1 => base[[i, j]],
            2 => base[[i, 0]] + base[[i, 1]],
            _ => base[[i, 0]] - base[[i, 1]],
        });
        let pca = fit_pca(x.view(), 4).unwrap();
        assert!(pca.explained_variance[2] < 1e-20 && pca.explained_variance[3] < 1e-20);
    }
}
