//! Accuracy metrics, permutation feature importance and occlusion maps.

use std::io::Write;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DatasetView, ViewKind};
use crate::models::{FittedModel, Learned, ModelError};
use crate::{par, rng};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {y} targets, {yhat} predictions")]
    LengthMismatch { y: usize, yhat: usize },
    #[error("at least two values are required, got {0}")]
    TooShort(usize),
    #[error("MAPE is undefined: the target contains zeros")]
    ZeroTarget,
    #[error("the target is constant")]
    ConstantTarget,
    #[error("at least two rows are required to permute a feature")]
    SingleRow,
    #[error("permutation importance needs a tabular view")]
    NotTabular,
    #[error("occlusion needs an image model")]
    NotImageModel,
    #[error("patch {patch} with stride {stride} does not fit a {nlat}x{nlon} grid")]
    PatchTooLarge { patch: usize, stride: usize, nlat: usize, nlon: usize },
    #[error("row {row} is out of range for {n} rows")]
    RowOutOfRange { row: usize, n: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("writing table: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(EvalError::LengthMismatch { y: y.len(), yhat: yhat.len() });
    }
    if y.len() < 2 {
        return Err(EvalError::TooShort(y.len()));
    }
    Ok(())
}

fn range(y: &[f64]) -> (f64, f64) {
    y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    Ok((y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Percent. Fails on any zero target.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    if y.contains(&0.0) {
        return Err(EvalError::ZeroTarget);
    }
    Ok(100.0 * y.iter().zip(yhat).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y.len() as f64)
}

/// RMSE as a percentage of the target range.
pub fn nrmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let e = rmse(y, yhat)?;
    let (lo, hi) = range(y);
    if hi <= lo {
        return Err(EvalError::ConstantTarget);
    }
    Ok(100.0 * e / (hi - lo))
}

pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantTarget);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    /// Drop rows with `|y| < 1e-9 · max|y|` from MAPE instead of failing.
    pub tolerate_zeros: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub mape: f64,
    pub rmse: f64,
    pub nrmse: f64,
    pub r2: f64,
    /// Rows left out of MAPE under `tolerate_zeros`.
    pub mape_excluded: usize,
}

pub fn metrics(y: &[f64], yhat: &[f64]) -> Result<MetricSet> {
    metrics_with(y, yhat, &MetricOptions::default())
}

pub fn metrics_with(y: &[f64], yhat: &[f64], opts: &MetricOptions) -> Result<MetricSet> {
    check(y, yhat)?;
    let (mape, excluded) = if opts.tolerate_zeros {
        let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..y.len()).filter(|&i| y[i].abs() >= 1e-9 * ymax && y[i] != 0.0).collect();
        if keep.is_empty() {
            return Err(EvalError::ZeroTarget);
        }
        let s: f64 = keep.iter().map(|&i| ((y[i] - yhat[i]) / y[i]).abs()).sum();
        (100.0 * s / keep.len() as f64, y.len() - keep.len())
    } else {
        (mape(y, yhat)?, 0)
    };
    Ok(MetricSet { mae: mae(y, yhat)?, mape, rmse: rmse(y, yhat)?, nrmse: nrmse(y, yhat)?, r2: r2(y, yhat)?, mape_excluded: excluded })
}

/// Error metric used for permutation importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    Mae,
    Mape,
    Rmse,
    Nrmse,
}

impl ErrorMetric {
    pub fn eval(self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        match self {
            ErrorMetric::Mae => mae(y, yhat),
            ErrorMetric::Mape => metrics_with(y, yhat, &MetricOptions { tolerate_zeros: true }).map(|m| m.mape),
            ErrorMetric::Rmse => rmse(y, yhat),
            ErrorMetric::Nrmse => nrmse(y, yhat),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    /// Column in the view's `x_tab`.
    pub column: usize,
    pub mean: f64,
    pub std: f64,
    pub repeats: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub metric: ErrorMetric,
    pub baseline: f64,
    pub features: Vec<FeatureImportance>,
}

impl Importance {
    /// Feature indices by decreasing mean importance.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| self.features[b].mean.total_cmp(&self.features[a].mean).then(a.cmp(&b)));
        idx
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Increase in `metric` (original units) when each model input column is
/// shuffled across `rows`, averaged over `n_repeats` shuffles.
pub fn permutation_importance(
    model: &FittedModel,
    view: &DatasetView,
    rows: &[usize],
    metric: ErrorMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Importance> {
    if view.kind == ViewKind::Image || view.x_img.is_some() {
        return Err(EvalError::NotTabular);
    }
    if rows.len() < 2 {
        return Err(EvalError::SingleRow);
    }
    let y = view.original_target(rows);
    let baseline = metric.eval(&y, &model.predict_original(view, rows)?)?;
    let cols = model.schema.columns.clone();
    let n_repeats = n_repeats.max(1);
    let jobs: Vec<(usize, usize)> = (0..cols.len()).flat_map(|f| (0..n_repeats).map(move |r| (f, r))).collect();
    let scores = par::map_slice(&jobs, |&(f, r)| -> Result<f64> {
        let mut order: Vec<usize> = rows.to_vec();
        order.shuffle(&mut rng::substream(rng::derive(seed, f as u64), r as u64));
        let mut v = view.clone();
        for (&dst, &src) in rows.iter().zip(&order) {
            v.x_tab[[dst, cols[f]]] = view.x_tab[[src, cols[f]]];
        }
        Ok(metric.eval(&y, &model.predict_original(&v, rows)?)? - baseline)
    });
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_>>()?;
    let features = cols
        .iter()
        .enumerate()
        .map(|(f, &c)| {
            let repeats = scores[f * n_repeats..(f + 1) * n_repeats].to_vec();
            let (mean, std) = mean_std(&repeats);
            FeatureImportance { name: view.feature_names[c].clone(), column: c, mean, std, repeats }
        })
        .collect();
    Ok(Importance { metric, baseline, features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    /// `(nlat, nlon)` mean absolute prediction change per cell.
    pub values: Array2<f64>,
    pub patch: usize,
    pub stride: usize,
    pub baseline: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionConfig {
    pub patch: usize,
    pub stride: usize,
    pub baseline: f32,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        OcclusionConfig { patch: 5, stride: 2, baseline: 0.0 }
    }
}

fn placements(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if p.last() != Some(&(len - patch)) {
        p.push(len - patch);
    }
    p
}

/// Slides a `patch × patch` square (all channels) set to `baseline` over
/// the image at `row` and records the absolute change of the prediction.
/// Each cell gets the mean over the placements covering it.
pub fn occlusion_map(model: &FittedModel, view: &DatasetView, row: usize, cfg: &OcclusionConfig) -> Result<AttributionMap> {
    let Learned::Cnn(cnn) = &model.learned else {
        return Err(EvalError::NotImageModel);
    };
    model.schema.check(view)?;
    let img = view.x_img.as_ref().ok_or(EvalError::NotImageModel)?;
    let (n, _, nlat, nlon) = img.dim();
    if row >= n {
        return Err(EvalError::RowOutOfRange { row, n });
    }
    let (patch, stride) = (cfg.patch, cfg.stride);
    if patch == 0 || stride == 0 || patch > nlat || patch > nlon {
        return Err(EvalError::PatchTooLarge { patch, stride, nlat, nlon });
    }
    let base: Array3<f32> = img.index_axis(ndarray::Axis(0), row).to_owned();
    let scalars: Vec<f64> = view.x_tab.row(row).to_vec();
    let reference = cnn.predict_raw(base.view(), &scalars);
    let spots: Vec<(usize, usize)> = placements(nlat, patch, stride)
        .into_iter()
        .flat_map(|i| placements(nlon, patch, stride).into_iter().map(move |j| (i, j)))
        .collect();
    let deltas = par::map_slice(&spots, |&(i, j)| {
        let mut occluded = base.clone();
        occluded.slice_mut(ndarray::s![.., i..i + patch, j..j + patch]).fill(cfg.baseline);
        (cnn.predict_raw(occluded.view(), &scalars) - reference).abs()
    });
    let mut sum = Array2::<f64>::zeros((nlat, nlon));
    let mut count = Array2::<f64>::zeros((nlat, nlon));
    for (&(i, j), d) in spots.iter().zip(&deltas) {
        sum.slice_mut(ndarray::s![i..i + patch, j..j + patch]).mapv_inplace(|v| v + d);
        count.slice_mut(ndarray::s![i..i + patch, j..j + patch]).mapv_inplace(|v| v + 1.0);
    }
    let values = Array2::from_shape_fn((nlat, nlon), |ix| if count[ix] > 0.0 { sum[ix] / count[ix] } else { 0.0 });
    Ok(AttributionMap { values, patch, stride, baseline: cfg.baseline })
}

/// One line of a metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub approach: String,
    pub model: String,
    pub detrend: bool,
    pub train: MetricSet,
    pub test: MetricSet,
}

pub const METRIC_TABLE_HEADER: [&str; 13] = [
    "approach", "model", "detrend", "train_mae", "train_mape", "train_rmse", "train_nrmse", "train_r2", "test_mae",
    "test_mape", "test_rmse", "test_nrmse", "test_r2",
];

pub fn write_metric_table<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let io = |e: csv::Error| EvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_TABLE_HEADER).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.approach.clone(), r.model.clone(), r.detrend.to_string()];
        for m in [&r.train, &r.test] {
            rec.extend([m.mae, m.mape, m.rmse, m.nrmse, m.r2].map(|v| v.to_string()));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mae, m.mape, m.rmse, m.nrmse, m.r2), (0.0, 0.0, 0.0, 0.0, 1.0));

        let (y, p) = ([0.0, 10.0], [5.0, 5.0]);
        assert_eq!(mae(&y, &p).unwrap(), 5.0);
        assert_eq!(rmse(&y, &p).unwrap(), 5.0);
        assert_eq!(nrmse(&y, &p).unwrap(), 50.0);
        assert_eq!(r2(&y, &p).unwrap(), 0.0);
        assert!(matches!(metrics(&y, &p), Err(EvalError::ZeroTarget)));
        let tol = metrics_with(&y, &p, &MetricOptions { tolerate_zeros: true }).unwrap();
        assert_eq!((tol.mape, tol.mape_excluded), (50.0, 1));

        let m = metrics(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.nrmse, m.r2), (1.0, 1.0, 50.0, 0.0));
        assert!((m.mape - 100.0 * (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(nrmse(&[2.0, 2.0], &[1.0, 2.0]), Err(EvalError::ConstantTarget)));
        assert!(matches!(r2(&[2.0, 2.0], &[1.0, 2.0]), Err(EvalError::ConstantTarget)));
        assert!(matches!(mae(&[1.0], &[1.0]), Err(EvalError::TooShort(1))));
        assert!(matches!(mae(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn metric_table_layout() {
        let m = metrics(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        let row = MetricRow { approach: "average".into(), model: "linear".into(), detrend: true, train: m, test: m };
        let mut buf = Vec::new();
        write_metric_table(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRIC_TABLE_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("average,linear,true,1,"));
    }

    #[test]
    fn placements_cover_edges() {
        assert_eq!(placements(10, 5, 2), vec![0, 2, 4, 5]);
        assert_eq!(placements(10, 5, 5), vec![0, 5]);
        assert_eq!(placements(5, 5, 2), vec![0]);
    }
}
