//! Fully connected networks on a flat parameter vector, plus the momentum
//! SGD loop shared with the CNN.

use ndarray::{Array1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{invalid, Diagnostics, ModelError, ModelSpec, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` given the output `a = apply(z)`.
    #[inline]
    pub fn grad(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let s = spec.text("activation", "tanh");
        Activation::parse(s).ok_or_else(|| invalid("activation", format!("expected tanh, relu or identity, got `{s}`")))
    }

    /// Glorot-uniform bound for tanh/identity, He-uniform for relu.
    pub(crate) fn init_bound(&self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Activation::Relu => (6.0 / fan_in.max(1) as f64).sqrt(),
            _ => (6.0 / (fan_in + fan_out).max(1) as f64).sqrt(),
        }
    }
}

/// Layer widths `[inputs, hidden..., 1]`. Parameters are stored layer by
/// layer as a row-major `(out, in)` weight block followed by `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(inputs: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        MlpArch { sizes, activation }
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
        }
        off
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        let mut p = vec![0.0; self.n_params()];
        let off = self.offsets();
        for (l, w) in self.sizes.windows(2).enumerate() {
            let b = self.activation.init_bound(w[0], w[1]);
            for v in &mut p[off[l]..off[l] + w[0] * w[1]] {
                *v = r.random_range(-b..=b);
            }
        }
        p
    }

    /// Pre-activations and activations per layer for one input row.
    fn forward_cached(&self, params: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let off = self.offsets();
        let last = self.sizes.len() - 2;
        let mut zs = Vec::with_capacity(self.sizes.len() - 1);
        let mut acts = vec![x.to_vec()];
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (nin, nout) = (w[0], w[1]);
            let wts = &params[off[l]..off[l] + nin * nout];
            let bias = &params[off[l] + nin * nout..off[l + 1]];
            let input = &acts[l];
            let z: Vec<f64> = (0..nout)
                .map(|o| bias[o] + wts[o * nin..(o + 1) * nin].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let a = if l == last { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> f64 {
        self.forward_cached(params, x).1.last().expect("output layer")[0]
    }

    /// Adds `scale * d output / d params` to `grad` and returns the
    /// gradient with respect to the input row.
    pub fn backward(&self, params: &[f64], x: &[f64], scale: f64, grad: &mut [f64]) -> Vec<f64> {
        let (zs, acts) = self.forward_cached(params, x);
        let off = self.offsets();
        let n_layers = self.sizes.len() - 1;
        let mut delta = vec![scale];
        for l in (0..n_layers).rev() {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let wts = &params[off[l]..off[l] + nin * nout];
            let input = &acts[l];
            for o in 0..nout {
                let g = &mut grad[off[l] + o * nin..off[l] + (o + 1) * nin];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += delta[o] * xi;
                }
                grad[off[l] + nin * nout + o] += delta[o];
            }
            let mut prev = vec![0.0; nin];
            for o in 0..nout {
                for i in 0..nin {
                    prev[i] += wts[o * nin + i] * delta[o];
                }
            }
            if l > 0 {
                for i in 0..nin {
                    prev[i] *= self.activation.grad(zs[l - 1][i], acts[l][i]);
                }
            }
            delta = prev;
        }
        delta
    }

    /// Mean squared error over rows and its parameter gradient.
    pub fn loss_and_grad(&self, params: &[f64], x: ArrayView2<'_, f64>, y: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (r, &t) in x.rows().into_iter().zip(y) {
            let row: Vec<f64> = r.to_vec();
            let e = self.forward(params, &row) - t;
            loss += e * e / n;
            self.backward(params, &row, 2.0 * e / n, &mut grad);
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a relative loss improvement of `1e-4` before stopping.
    pub patience: usize,
}

impl SgdConfig {
    pub(crate) fn from_spec(spec: &ModelSpec, lr: f64, batch: usize, epochs: usize) -> Result<Self> {
        let c = SgdConfig {
            learning_rate: spec.float("learning_rate", lr),
            momentum: spec.float("momentum", 0.9),
            batch_size: spec.count("batch_size", batch, 1)?,
            epochs: spec.count("epochs", epochs, 1)?,
            patience: spec.count("patience", 20, 1)?,
        };
        if !(c.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&c.momentum) {
            return Err(invalid("momentum", "must lie in [0, 1)".into()));
        }
        Ok(c)
    }
}

/// Mini-batch gradient descent with heavy-ball momentum. `batch_grad`
/// returns the mean loss and gradient over the given row indices. Training
/// stops after `epochs` or once the epoch loss has plateaued.
pub(crate) fn train_sgd<F>(
    mut params: Vec<f64>,
    n_rows: usize,
    cfg: &SgdConfig,
    seed: u64,
    diagnostics: &mut Diagnostics,
    batch_grad: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[usize]) -> (f64, Vec<f64>),
{
    let mut r = rng::substream(seed, 0x5eed);
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_grad(&params, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteLoss { epoch, learning_rate: cfg.learning_rate });
            }
            epoch_loss += loss * batch.len() as f64 / n_rows as f64;
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        diagnostics.loss_curve.push(epoch_loss);
        if epoch_loss < best * (1.0 - 1e-4) {
            stale = 0;
        } else {
            stale += 1;
        }
        best = best.min(epoch_loss);
        if stale >= cfg.patience {
            diagnostics.stopped_early = true;
            break;
        }
    }
    Ok(params)
}

/// Column means and standard deviations (1 where a column is constant).
pub(crate) fn standardizer(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, std)
}

pub(crate) fn target_scale(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if s > 1e-12 { s } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub arch: MlpArch,
    pub params: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

pub(crate) fn fit_mlp(spec: &ModelSpec, x: ArrayView2<'_, f64>, y: &[f64], diagnostics: &mut Diagnostics) -> Result<Mlp> {
    let activation = Activation::from_spec(spec)?;
    let units = spec.count("hidden_units", 32, 1)?;
    let layers = spec.count("hidden_layers", 2, 0)?;
    let cfg = SgdConfig::from_spec(spec, 0.01, 32, 200)?;
    let arch = MlpArch::new(x.ncols(), &vec![units; layers], activation);
    let (mu, sd) = standardizer(x);
    let xs = (&x - &mu) / &sd;
    let (ym, ys) = target_scale(y);
    let yt: Vec<f64> = y.iter().map(|v| (v - ym) / ys).collect();
    let init = arch.init(rng::derive(spec.seed, 1));
    let params = train_sgd(init, y.len(), &cfg, spec.seed, diagnostics, |p, rows| {
        let xb = xs.select(Axis(0), rows);
        let yb: Vec<f64> = rows.iter().map(|&r| yt[r]).collect();
        arch.loss_and_grad(p, xb.view(), &yb)
    })?;
    Ok(Mlp { arch, params, x_mean: mu.to_vec(), x_std: sd.to_vec(), y_mean: ym, y_std: ys })
}

impl Mlp {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| {
                let row: Vec<f64> = r.iter().enumerate().map(|(j, v)| (v - self.x_mean[j]) / self.x_std[j]).collect();
                self.y_mean + self.y_std * self.arch.forward(&self.params, &row)
            })
            .collect()
    }
}

/// Largest relative deviation between analytic and central-difference
/// gradients over the parameter indices `probe`.
pub fn max_relative_gradient_error<F>(params: &[f64], analytic: &[f64], probe: &[usize], step: f64, loss: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for &k in probe {
        let orig = p[k];
        p[k] = orig + step;
        let up = loss(&p);
        p[k] = orig - step;
        let down = loss(&p);
        p[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}
