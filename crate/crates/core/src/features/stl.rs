//! Seasonal-trend decomposition by loess (inner loop only, no robustness
//! iterations), following the classic cycle-subseries / low-pass scheme.

use serde::{Deserialize, Serialize};

use super::{FeaturesError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlParams {
    pub period: usize,
    /// Cycle-subseries smoother span (odd, ≥ 7).
    pub seasonal_window: usize,
    /// Trend smoother span (odd).
    pub trend_window: usize,
    /// Low-pass smoother span (odd, ≥ period).
    pub lowpass_window: usize,
    pub inner_iterations: usize,
}

impl StlParams {
    pub fn new(period: usize, trend_window: usize) -> Self {
        StlParams {
            period,
            seasonal_window: 7,
            trend_window: make_odd(trend_window.max(3)),
            lowpass_window: make_odd(period.max(3)),
            inner_iterations: 2,
        }
    }
}

impl Default for StlParams {
    /// Daily data with a yearly cycle and a two-year trend span.
    fn default() -> Self {
        StlParams::new(365, 731)
    }
}

fn make_odd(n: usize) -> usize {
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

#[derive(Debug, Clone)]
pub struct StlDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

pub fn stl(values: &[f64], params: &StlParams) -> Result<StlDecomposition> {
    let n = values.len();
    let np = params.period;
    if np < 2 || n < 2 * np {
        return Err(FeaturesError::SeriesTooShort { len: n, needed: 2 * np.max(2) });
    }
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut detrended = vec![0.0; n];
    let mut cycle = vec![0.0; n + 2 * np];
    for _ in 0..params.inner_iterations.max(1) {
        for i in 0..n {
            detrended[i] = values[i] - trend[i];
        }
        smooth_subseries(&detrended, np, params.seasonal_window, &mut cycle);
        let low = lowpass(&cycle, np, params.lowpass_window);
        for i in 0..n {
            seasonal[i] = cycle[np + i] - low[i];
        }
        let deseason: Vec<f64> = values.iter().zip(&seasonal).map(|(v, s)| v - s).collect();
        trend = loess_all(&deseason, params.trend_window);
    }
    let remainder = (0..n).map(|i| values[i] - trend[i] - seasonal[i]).collect();
    Ok(StlDecomposition { trend, seasonal, remainder })
}

/// Long-term trend and `values - trend`. Seasonality stays in the residual.
pub fn stl_detrend(values: &[f64], period: usize, trend_window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = stl(values, &StlParams::new(period, trend_window))?;
    let residual = values.iter().zip(&d.trend).map(|(v, t)| v - t).collect();
    Ok((d.trend, residual))
}

/// Smooths each cycle-subseries and extends it by one point on each side;
/// writes the recombined series (length `n + 2 * period`) into `out`.
fn smooth_subseries(y: &[f64], np: usize, span: usize, out: &mut [f64]) {
    let n = y.len();
    for k in 0..np {
        let sub: Vec<f64> = (k..n).step_by(np).map(|i| y[i]).collect();
        let m = sub.len();
        // positions -1 ..= m in subseries index units
        for p in 0..m + 2 {
            let x = p as f64 - 1.0;
            let v = loess_at(&sub, span, x).unwrap_or_else(|| sub[(p.max(1) - 1).min(m - 1)]);
            out[p * np + k] = v;
        }
    }
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 1 - len);
    let mut s: f64 = x[..len].iter().sum();
    out.push(s / len as f64);
    for i in len..n {
        s += x[i] - x[i - len];
        out.push(s / len as f64);
    }
    out
}

fn lowpass(c: &[f64], np: usize, span: usize) -> Vec<f64> {
    let a = moving_average(c, np);
    let b = moving_average(&a, np);
    let d = moving_average(&b, 3);
    loess_all(&d, span)
}

fn loess_all(y: &[f64], span: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| loess_at(y, span, i as f64).unwrap_or(y[i]))
        .collect()
}

/// Local-linear tricube loess of equally spaced `y` (at 0, 1, ...) evaluated
/// at `x`, using the `span` nearest points. `None` when all weights vanish.
pub(crate) fn loess_at(y: &[f64], span: usize, x: f64) -> Option<f64> {
    let n = y.len();
    if n == 0 {
        return None;
    }
    let q = span.max(2);
    let (lo, hi, h) = if q >= n {
        let h = (x - 0.0).max((n - 1) as f64 - x) + ((q - n) / 2) as f64;
        (0usize, n - 1, h)
    } else {
        let start = (x.round() as i64 - (q as i64 - 1) / 2).clamp(0, (n - q) as i64) as usize;
        let (lo, hi) = (start, start + q - 1);
        (lo, hi, (x - lo as f64).max(hi as f64 - x))
    };
    let h = h.max(1e-12);
    let (h9, h1) = (0.999 * h, 0.001 * h);
    let mut w = Vec::with_capacity(hi - lo + 1);
    let mut total = 0.0;
    for j in lo..=hi {
        let r = (j as f64 - x).abs();
        let wj = if r <= h1 {
            1.0
        } else if r <= h9 {
            let u = r / h;
            (1.0 - u * u * u).powi(3)
        } else {
            0.0
        };
        total += wj;
        w.push(wj);
    }
    if total <= 0.0 {
        return None;
    }
    for wj in w.iter_mut() {
        *wj /= total;
    }
    let a: f64 = w.iter().enumerate().map(|(k, wj)| wj * (lo + k) as f64).sum();
    let c: f64 = w.iter().enumerate().map(|(k, wj)| wj * ((lo + k) as f64 - a).powi(2)).sum();
    let range = (n - 1) as f64;
    if c.sqrt() > 0.001 * range {
        let b = (x - a) / c;
        for (k, wj) in w.iter_mut().enumerate() {
            *wj *= b * ((lo + k) as f64 - a) + 1.0;
        }
    }
    Some(w.iter().enumerate().map(|(k, wj)| wj * y[lo + k]).sum())
}
