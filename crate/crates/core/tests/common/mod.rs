#![allow(dead_code)]

use chrono::NaiveDate;
use gridcast_core::features::{DatasetView, ViewKind};
use gridcast_core::{Series, TimeAxis};
use ndarray::Array2;

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 1, 1).unwrap()
}

/// Average-kind view over the given feature matrix.
pub fn tab_view(x: Array2<f64>, y: Vec<f64>) -> DatasetView {
    let n = y.len();
    let p = x.ncols();
    DatasetView {
        kind: ViewKind::Average,
        x_tab: x,
        x_img: None,
        y: Series::new(TimeAxis::daily(start(), n), "power_mw", "MW", y),
        feature_names: (0..p).map(|j| format!("x{j}")).collect(),
        channel_names: vec![],
        weather_columns: p,
        trends: vec![],
        target_trend: None,
        pca: None,
    }
}

/// Deterministic standard normal draws (Box-Muller on a splitmix stream).
pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut unif = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    (0..n)
        .map(|_| {
            let (a, b) = (unif(), unif());
            (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
        })
        .collect()
}
