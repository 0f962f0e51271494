//! Additive model of penalized cubic B-spline smooths (one per feature)
//! with a second-difference coefficient penalty.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{invalid, ModelError, ModelSpec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GamParams {
    /// Equally spaced knots over each feature's training range, ends included.
    pub n_knots: usize,
    pub lambda: f64,
}

impl GamParams {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let p = GamParams { n_knots: spec.count("n_knots", 10, 4)?, lambda: spec.float("lambda", 1.0) };
        if !(p.lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be non-negative, got {}", p.lambda)));
        }
        Ok(p)
    }
}

/// Number of cubic basis functions for `n_knots` knots.
pub fn n_basis(n_knots: usize) -> usize {
    n_knots + 2
}

fn cubic_pieces(t: f64) -> ([f64; 4], [f64; 4]) {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    let v = [s * s * s / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0, (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0];
    let d = [-s * s / 2.0, (3.0 * t2 - 4.0 * t) / 2.0, (-3.0 * t2 + 2.0 * t + 1.0) / 2.0, t2 / 2.0];
    (v, d)
}

/// Uniform cubic B-spline basis on `[lo, hi]` evaluated at `x`, continued
/// linearly outside the interval. Rows sum to one everywhere.
pub fn bspline_basis(x: f64, lo: f64, hi: f64, n_knots: usize) -> Vec<f64> {
    let segments = n_knots - 1;
    let h = (hi - lo) / segments as f64;
    let clamped = x.clamp(lo, hi);
    let u = (clamped - lo) / h;
    let seg = (u.floor() as usize).min(segments - 1);
    let (v, d) = cubic_pieces(u - seg as f64);
    let mut out = vec![0.0; n_basis(n_knots)];
    let dx = x - clamped;
    for k in 0..4 {
        out[seg + k] = v[k] + d[k] / h * dx;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smooth {
    pub lo: f64,
    pub hi: f64,
    /// Training means of the basis columns; subtracted so each smooth has
    /// zero training mean.
    pub centers: Vec<f64>,
    pub coef: Vec<f64>,
}

impl Smooth {
    pub fn eval(&self, x: f64, n_knots: usize) -> f64 {
        bspline_basis(x, self.lo, self.hi, n_knots)
            .iter()
            .zip(&self.centers)
            .zip(&self.coef)
            .map(|((b, c), w)| (b - c) * w)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gam {
    pub n_knots: usize,
    pub intercept: f64,
    /// `None` for features that were constant in training.
    pub smooths: Vec<Option<Smooth>>,
}

pub fn fit_gam(x: ArrayView2<'_, f64>, y: &[f64], params: &GamParams) -> Result<Gam> {
    if params.n_knots < 4 {
        return Err(invalid("n_knots", format!("must be at least 4, got {}", params.n_knots)));
    }
    let (n, p) = x.dim();
    if n == 0 {
        return Err(ModelError::EmptyRows);
    }
    let kb = n_basis(params.n_knots);
    let ranges: Vec<Option<(f64, f64)>> = (0..p)
        .map(|j| {
            let col = x.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs()))).then_some((lo, hi))
        })
        .collect();
    let active: Vec<usize> = (0..p).filter(|&j| ranges[j].is_some()).collect();
    let m = active.len() * kb;
    let ybar = y.iter().sum::<f64>() / n as f64;

    let mut design = DMatrix::<f64>::zeros(n, m);
    for (a, &j) in active.iter().enumerate() {
        let (lo, hi) = ranges[j].expect("active");
        for i in 0..n {
            for (k, b) in bspline_basis(x[[i, j]], lo, hi, params.n_knots).into_iter().enumerate() {
                design[(i, a * kb + k)] = b;
            }
        }
    }
    let centers: Vec<f64> = (0..m).map(|c| design.column(c).sum() / n as f64).collect();
    for (c, mu) in centers.iter().enumerate() {
        design.column_mut(c).iter_mut().for_each(|v| *v -= mu);
    }

    let mut g = design.transpose() * &design;
    for a in 0..active.len() {
        let off = a * kb;
        for r in 0..kb - 2 {
            let d = [1.0, -2.0, 1.0];
            for u in 0..3 {
                for v in 0..3 {
                    g[(off + r + u, off + r + v)] += params.lambda * d[u] * d[v];
                }
            }
        }
    }
    let scale = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1.0);
    for i in 0..m {
        g[(i, i)] += 1e-12 * scale;
    }
    let rhs = design.transpose() * DVector::from_iterator(n, y.iter().map(|v| v - ybar));
    let coef = match g.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => crate::linalg::lstsq(&g, &rhs),
    };
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(ModelError::SingularSystem);
    }

    let mut smooths = vec![None; p];
    for (a, &j) in active.iter().enumerate() {
        let (lo, hi) = ranges[j].expect("active");
        smooths[j] = Some(Smooth {
            lo,
            hi,
            centers: centers[a * kb..(a + 1) * kb].to_vec(),
            coef: coef.as_slice()[a * kb..(a + 1) * kb].to_vec(),
        });
    }
    Ok(Gam { n_knots: params.n_knots, intercept: ybar, smooths })
}

impl Gam {
    pub fn smooth(&self, feature: usize, x: f64) -> f64 {
        self.smooths[feature].as_ref().map_or(0.0, |s| s.eval(x, self.n_knots))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.intercept + r.iter().enumerate().map(|(j, &v)| self.smooth(j, v)).sum::<f64>())
            .collect()
    }
}
