use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{invalid, Result};
use crate::linalg;

/// `y = intercept + coef · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

/// Least squares with an unpenalized intercept. `alpha > 0` adds a ridge
/// penalty on the coefficients of the centered problem; `alpha = 0` gives the
/// minimum-norm solution.
pub fn fit_linear(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<LinearModel> {
    if !(alpha >= 0.0) {
        return Err(invalid("alpha", format!("must be non-negative, got {alpha}")));
    }
    let (n, p) = x.dim();
    let means = x.mean_axis(Axis(0)).expect("rows present");
    let ybar = y.iter().sum::<f64>() / n as f64;
    let a = DMatrix::from_fn(n, p, |i, j| x[[i, j]] - means[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let coef = if p == 0 {
        DVector::zeros(0)
    } else if alpha > 0.0 {
        linalg::ridge_solve(&a, &b, alpha, &vec![true; p])
    } else {
        linalg::lstsq(&a, &b)
    };
    let intercept = ybar - coef.iter().zip(means.iter()).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearModel { coef: coef.iter().copied().collect(), intercept })
}

impl LinearModel {
    pub fn predict_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept + row.into_iter().zip(&self.coef).map(|(v, c)| v * c).sum::<f64>()
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r.iter().copied())).collect()
    }
}
