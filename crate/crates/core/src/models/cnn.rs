//! Small convolutional network for capacity-weighted maps.
//!
//! ```text
//! image (C × H × W)
//!   → conv 3×3 (c1) → act → pool 2×2
//!   → conv 3×3 (c2) → act → pool 2×2
//!   → global average pool (c2)
//!   → concat scalars → dense (d) → act → dense (1)
//! ```
//!
//! Convolutions use stride 1 and zero "same" padding. Pooling windows are
//! clipped at the border, so odd sizes round up.

use ndarray::ArrayView3;
use serde::{Deserialize, Serialize};

use super::mlp::{standardizer, target_scale, train_sgd, Activation, SgdConfig};
use super::{invalid, Diagnostics, ModelError, ModelSpec, Result};
use crate::features::DatasetView;
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Max,
    Avg,
}

impl Pool {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" => Some(Pool::Max),
            "avg" => Some(Pool::Avg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub n_scalars: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub dense: usize,
    pub activation: Activation,
    pub pool: Pool,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
    total: usize,
}

/// Intermediate values of one forward pass.
struct Trace {
    z1: Vec<f64>,
    a1: Vec<f64>,
    p1: Vec<f64>,
    arg1: Vec<usize>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    arg2: Vec<usize>,
    h_in: Vec<f64>,
    z3: Vec<f64>,
    a3: Vec<f64>,
    out: f64,
}

fn pooled(n: usize) -> usize {
    n.div_ceil(2)
}

/// Zero-padded 3×3 convolution of a `(ci, h, w)` input into `(co, h, w)`.
fn conv_forward(input: &[f64], ci: usize, h: usize, w: usize, wts: &[f64], bias: &[f64], co: usize) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; co * hw];
    for o in 0..co {
        let dst = &mut out[o * hw..(o + 1) * hw];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..ci {
            let src = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let (ylo, yhi) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                for kx in 0..3 {
                    let wv = wts[((o * ci + i) * 3 + ky) * 3 + kx];
                    let (xlo, xhi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    if xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let sy = y + ky - 1;
                        let d = &mut dst[y * w + xlo..y * w + xhi];
                        let s = &src[sy * w + xlo + kx - 1..sy * w + xhi + kx - 1];
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients of a convolution; returns the
/// input gradient when `want_input` is set.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    ci: usize,
    h: usize,
    w: usize,
    wts: &[f64],
    dz: &[f64],
    co: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let hw = h * w;
    let mut din = want_input.then(|| vec![0.0; ci * hw]);
    for o in 0..co {
        let d = &dz[o * hw..(o + 1) * hw];
        gb[o] += d.iter().sum::<f64>();
        for i in 0..ci {
            let src = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let (ylo, yhi) = (1usize.saturating_sub(ky), (h + 1 - ky).min(h));
                for kx in 0..3 {
                    let widx = ((o * ci + i) * 3 + ky) * 3 + kx;
                    let (xlo, xhi) = (1usize.saturating_sub(kx), (w + 1 - kx).min(w));
                    if xlo >= xhi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let sy = y + ky - 1;
                        let dd = &d[y * w + xlo..y * w + xhi];
                        let s = &src[sy * w + xlo + kx - 1..sy * w + xhi + kx - 1];
                        acc += dd.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(din) = din.as_mut() {
                            let wv = wts[widx];
                            let base = i * hw + sy * w;
                            let t = &mut din[base + xlo + kx - 1..base + xhi + kx - 1];
                            for (a, b) in t.iter_mut().zip(dd) {
                                *a += wv * b;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    din
}

/// 2×2 pooling of a `(c, h, w)` map; max pooling also returns the flat
/// index of each window's maximum.
fn pool_forward(x: &[f64], c: usize, h: usize, w: usize, kind: Pool) -> (Vec<f64>, Vec<usize>) {
    let (ph, pw) = (pooled(h), pooled(w));
    let mut out = Vec::with_capacity(c * ph * pw);
    let mut arg = Vec::new();
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = (f64::NEG_INFINITY, 0usize);
                let (mut sum, mut cnt) = (0.0, 0.0);
                for cy in 2 * py..(2 * py + 2).min(h) {
                    for cx in 2 * px..(2 * px + 2).min(w) {
                        let k = (ch * h + cy) * w + cx;
                        if x[k] > best.0 {
                            best = (x[k], k);
                        }
                        sum += x[k];
                        cnt += 1.0;
                    }
                }
                match kind {
                    Pool::Max => {
                        out.push(best.0);
                        arg.push(best.1);
                    }
                    Pool::Avg => out.push(sum / cnt),
                }
            }
        }
    }
    (out, arg)
}

fn pool_backward(dout: &[f64], arg: &[usize], c: usize, h: usize, w: usize, kind: Pool) -> Vec<f64> {
    let (ph, pw) = (pooled(h), pooled(w));
    let mut dx = vec![0.0; c * h * w];
    match kind {
        Pool::Max => {
            for (g, &k) in dout.iter().zip(arg) {
                dx[k] += g;
            }
        }
        Pool::Avg => {
            for ch in 0..c {
                for py in 0..ph {
                    for px in 0..pw {
                        let (y1, x1) = ((2 * py + 2).min(h), (2 * px + 2).min(w));
                        let cnt = ((y1 - 2 * py) * (x1 - 2 * px)) as f64;
                        let g = dout[(ch * ph + py) * pw + px] / cnt;
                        for cy in 2 * py..y1 {
                            for cx in 2 * px..x1 {
                                dx[(ch * h + cy) * w + cx] += g;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

impl CnnArch {
    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.conv1 * self.channels * 9;
        let w2 = b1 + self.conv1;
        let b2 = w2 + self.conv2 * self.conv1 * 9;
        let w3 = b2 + self.conv2;
        let b3 = w3 + self.dense * (self.conv2 + self.n_scalars);
        let w4 = b3 + self.dense;
        let b4 = w4 + self.dense;
        Layout { w1, b1, w2, b2, w3, b3, w4, b4, total: b4 + 1 }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn init(&self, seed: u64) -> Vec<f64> {
        use rand::Rng as _;
        let l = self.layout();
        let mut r = rng::seeded(seed);
        let mut p = vec![0.0; l.total];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize, p: &mut [f64]| {
            let b = self.activation.init_bound(fan_in, fan_out);
            for v in &mut p[range] {
                *v = r.random_range(-b..=b);
            }
        };
        fill(l.w1..l.b1, self.channels * 9, self.conv1 * 9, &mut p);
        fill(l.w2..l.b2, self.conv1 * 9, self.conv2 * 9, &mut p);
        fill(l.w3..l.b3, self.conv2 + self.n_scalars, self.dense, &mut p);
        fill(l.w4..l.b4, self.dense, 1, &mut p);
        p
    }

    fn trace(&self, params: &[f64], img: &[f64], scalars: &[f64]) -> Trace {
        let l = self.layout();
        let act = self.activation;
        let (h, w) = (self.height, self.width);
        let (h1, w1) = (pooled(h), pooled(w));
        let (h2, w2) = (pooled(h1), pooled(w1));
        let z1 = conv_forward(img, self.channels, h, w, &params[l.w1..l.b1], &params[l.b1..l.w2], self.conv1);
        let a1: Vec<f64> = z1.iter().map(|&v| act.apply(v)).collect();
        let (p1, arg1) = pool_forward(&a1, self.conv1, h, w, self.pool);
        let z2 = conv_forward(&p1, self.conv1, h1, w1, &params[l.w2..l.b2], &params[l.b2..l.w3], self.conv2);
        let a2: Vec<f64> = z2.iter().map(|&v| act.apply(v)).collect();
        let (p2, arg2) = pool_forward(&a2, self.conv2, h1, w1, self.pool);
        let cells = (h2 * w2) as f64;
        let mut h_in: Vec<f64> = (0..self.conv2).map(|c| p2[c * h2 * w2..(c + 1) * h2 * w2].iter().sum::<f64>() / cells).collect();
        h_in.extend_from_slice(scalars);
        let nin = h_in.len();
        let w3 = &params[l.w3..l.b3];
        let z3: Vec<f64> = (0..self.dense)
            .map(|o| params[l.b3 + o] + w3[o * nin..(o + 1) * nin].iter().zip(&h_in).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let a3: Vec<f64> = z3.iter().map(|&v| act.apply(v)).collect();
        let out = params[l.b4] + params[l.w4..l.b4].iter().zip(&a3).map(|(a, b)| a * b).sum::<f64>();
        Trace { z1, a1, p1, arg1, z2, a2, arg2, h_in, z3, a3, out }
    }

    /// Network output for one standardized sample.
    pub fn forward(&self, params: &[f64], img: &[f64], scalars: &[f64]) -> f64 {
        self.trace(params, img, scalars).out
    }

    /// Adds `scale * d output / d params` to `grad`. Returns the output and,
    /// when requested, the gradient with respect to the image.
    pub fn backward(
        &self,
        params: &[f64],
        img: &[f64],
        scalars: &[f64],
        scale: f64,
        grad: &mut [f64],
        want_input: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let l = self.layout();
        let act = self.activation;
        let t = self.trace(params, img, scalars);
        let (h, w) = (self.height, self.width);
        let (h1, w1) = (pooled(h), pooled(w));
        let (h2, w2) = (pooled(h1), pooled(w1));
        let nin = t.h_in.len();

        grad[l.b4] += scale;
        let mut dz3 = vec![0.0; self.dense];
        for o in 0..self.dense {
            grad[l.w4 + o] += scale * t.a3[o];
            dz3[o] = scale * params[l.w4 + o] * act.grad(t.z3[o], t.a3[o]);
        }
        let mut dh = vec![0.0; nin];
        for o in 0..self.dense {
            grad[l.b3 + o] += dz3[o];
            for i in 0..nin {
                grad[l.w3 + o * nin + i] += dz3[o] * t.h_in[i];
                dh[i] += params[l.w3 + o * nin + i] * dz3[o];
            }
        }
        let cells = (h2 * w2) as f64;
        let mut dp2 = vec![0.0; self.conv2 * h2 * w2];
        for c in 0..self.conv2 {
            dp2[c * h2 * w2..(c + 1) * h2 * w2].iter_mut().for_each(|v| *v = dh[c] / cells);
        }
        let da2 = pool_backward(&dp2, &t.arg2, self.conv2, h1, w1, self.pool);
        let dz2: Vec<f64> = da2.iter().zip(t.z2.iter().zip(&t.a2)).map(|(g, (&z, &a))| g * act.grad(z, a)).collect();
        let (gw2, rest) = grad[l.w2..l.w3].split_at_mut(l.b2 - l.w2);
        let dp1 = conv_backward(&t.p1, self.conv1, h1, w1, &params[l.w2..l.b2], &dz2, self.conv2, gw2, rest, true)
            .expect("input gradient requested");
        let da1 = pool_backward(&dp1, &t.arg1, self.conv1, h, w, self.pool);
        let dz1: Vec<f64> = da1.iter().zip(t.z1.iter().zip(&t.a1)).map(|(g, (&z, &a))| g * act.grad(z, a)).collect();
        let (gw1, rest) = grad[l.w1..l.w2].split_at_mut(l.b1 - l.w1);
        let dimg = conv_backward(img, self.channels, h, w, &params[l.w1..l.b1], &dz1, self.conv1, gw1, rest, want_input);
        (t.out, dimg)
    }
}

/// Per-sample inputs after standardization.
struct Sample {
    img: Vec<f64>,
    scalars: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cnn {
    pub arch: CnnArch,
    pub params: Vec<f64>,
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    pub scalar_mean: Vec<f64>,
    pub scalar_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Cnn {
    fn sample(&self, img: ArrayView3<'_, f32>, scalars: &[f64]) -> Sample {
        let (c, h, w) = img.dim();
        let hw = h * w;
        let mut out = Vec::with_capacity(c * hw);
        for ch in 0..c {
            let (m, s) = (self.channel_mean[ch], self.channel_std[ch]);
            out.extend(img.index_axis(ndarray::Axis(0), ch).iter().map(|&v| (v as f64 - m) / s));
        }
        let sc = scalars.iter().enumerate().map(|(j, v)| (v - self.scalar_mean[j]) / self.scalar_std[j]).collect();
        Sample { img: out, scalars: sc }
    }

    /// Prediction for one raw `(channels, nlat, nlon)` image and its scalars.
    pub fn predict_raw(&self, img: ArrayView3<'_, f32>, scalars: &[f64]) -> f64 {
        let s = self.sample(img, scalars);
        self.y_mean + self.y_std * self.arch.forward(&self.params, &s.img, &s.scalars)
    }

    pub(crate) fn predict_view(&self, view: &DatasetView, rows: &[usize]) -> Vec<f64> {
        let img = view.x_img.as_ref().expect("schema checked");
        par::map_slice(rows, |&r| {
            let sc: Vec<f64> = view.x_tab.row(r).to_vec();
            self.predict_raw(img.index_axis(ndarray::Axis(0), r), &sc)
        })
    }
}

pub(crate) fn fit_cnn(spec: &ModelSpec, view: &DatasetView, rows: &[usize], diagnostics: &mut Diagnostics) -> Result<Cnn> {
    let img = view.x_img.as_ref().ok_or(ModelError::ViewKindMismatch { family: spec.family, kind: view.kind.as_str() })?;
    let (_, c, h, w) = img.dim();
    let pool = spec.text("pool", "max");
    let arch = CnnArch {
        channels: c,
        height: h,
        width: w,
        n_scalars: view.n_features(),
        conv1: spec.count("conv1_channels", 8, 1)?,
        conv2: spec.count("conv2_channels", 16, 1)?,
        dense: spec.count("dense_units", 32, 1)?,
        activation: Activation::from_spec(spec)?,
        pool: Pool::parse(pool).ok_or_else(|| invalid("pool", format!("expected max or avg, got `{pool}`")))?,
    };
    let cfg = SgdConfig::from_spec(spec, 0.005, 32, 100)?;

    let mut channel_mean = vec![0.0; c];
    let mut channel_std = vec![1.0; c];
    for ch in 0..c {
        let vals: Vec<f64> = rows
            .iter()
            .flat_map(|&r| img.slice(ndarray::s![r, ch, .., ..]).iter().map(|&v| v as f64).collect::<Vec<_>>())
            .collect();
        let (m, s) = target_scale(&vals);
        channel_mean[ch] = m;
        channel_std[ch] = s;
    }
    let scal = super::gather(view, &(0..view.n_features()).collect::<Vec<_>>(), rows);
    let (sm, ss) = standardizer(scal.view());
    let y = view.target(rows);
    let (y_mean, y_std) = target_scale(&y);
    let mut model = Cnn {
        params: arch.init(rng::derive(spec.seed, 1)),
        arch,
        channel_mean,
        channel_std,
        scalar_mean: sm.to_vec(),
        scalar_std: ss.to_vec(),
        y_mean,
        y_std,
    };
    let samples: Vec<Sample> = rows
        .iter()
        .map(|&r| model.sample(img.index_axis(ndarray::Axis(0), r), &view.x_tab.row(r).to_vec()))
        .collect();
    let yt: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
    let arch = model.arch.clone();
    let params = train_sgd(model.params.clone(), rows.len(), &cfg, spec.seed, diagnostics, |p, batch| {
        let chunk = 8;
        let parts = par::map_range(batch.len().div_ceil(chunk), |k| {
            let mut g = vec![0.0; p.len()];
            let mut loss = 0.0;
            for &i in &batch[k * chunk..((k + 1) * chunk).min(batch.len())] {
                let out = arch.forward(p, &samples[i].img, &samples[i].scalars);
                let e = out - yt[i];
                loss += e * e;
                arch.backward(p, &samples[i].img, &samples[i].scalars, 2.0 * e, &mut g, false);
            }
            (loss, g)
        });
        let nb = batch.len() as f64;
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|v| *v /= nb);
        (loss / nb, grad)
    })?;
    model.params = params;
    Ok(model)
}
