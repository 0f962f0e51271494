//! Model-ready dataset views, chronological splits, STL detrending and PCA.
//!
//! Three views are built from daily capacity-weighted stacks:
//!
//! * `Average`: per-variable spatial means plus scalar feature columns,
//! * `Components`: principal components of the flattened maps plus scalars,
//! * `Image`: the maps themselves as channels, with scalars on the side.

mod pca;
pub mod stl;
mod view_io;

use chrono::NaiveDate;
use ndarray::{s, Array2, Array4, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridstore::{GridError, GridStack, Series};
use crate::ingest::FeatureColumn;

pub use pca::{fit_pca, Pca};
pub use stl::{stl, stl_detrend, StlDecomposition, StlParams};
pub use view_io::{read_view, write_view};

#[derive(Debug, Error)]
pub enum FeaturesError {
    #[error("stacks or columns have different axes")]
    AxisMismatch,
    #[error("series of length {len} is too short (need at least {needed})")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("requested {requested} components, at most {max} available")]
    InvalidComponents { requested: usize, max: usize },
    #[error("split window out of range: {0}")]
    WindowOutOfRange(String),
    #[error("view contains non-finite values in {0}")]
    NonFinite(String),
    #[error("no weather stacks given")]
    Empty,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("view i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FeaturesError>;

/// Per-variable, per-day mean over all grid cells, one column per stack in
/// input order.
pub fn spatial_average(weighted: &[GridStack]) -> Result<Array2<f64>> {
    let first = weighted.first().ok_or(FeaturesError::Empty)?;
    if weighted.iter().any(|s| !s.same_axes(first)) {
        return Err(FeaturesError::AxisMismatch);
    }
    let nt = first.time.nt;
    let cells = first.spec.n_cells() as f64;
    let mut out = Array2::zeros((nt, weighted.len()));
    for (c, stack) in weighted.iter().enumerate() {
        for (t, map) in stack.values.axis_iter(Axis(0)).enumerate() {
            out[[t, c]] = map.iter().map(|&v| v as f64).sum::<f64>() / cells;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Average,
    Components,
    Image,
}

impl ViewKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewKind::Average => "average",
            ViewKind::Components => "components",
            ViewKind::Image => "image",
        }
    }
}

/// A fitted long-term trend for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub column: String,
    pub method: String,
    pub period: usize,
    pub trend_window: usize,
    /// Number of leading rows the trend was fitted on; later rows are a
    /// linear extrapolation.
    pub fitted_rows: usize,
    pub trend: Vec<f64>,
}

impl TrendModel {
    /// Fits STL on `values[..fit_rows]` and extends the trend linearly with
    /// the slope of its last `period` points.
    pub fn fit(column: &str, values: &[f64], period: usize, trend_window: usize, fit_rows: usize) -> Result<Self> {
        let fit_rows = fit_rows.min(values.len());
        let (mut trend, _) = stl_detrend(&values[..fit_rows], period, trend_window)?;
        if fit_rows < values.len() {
            let last = trend[fit_rows - 1];
            let back = period.min(fit_rows - 1);
            let slope = (last - trend[fit_rows - 1 - back]) / back as f64;
            for k in fit_rows..values.len() {
                trend.push(last + slope * (k + 1 - fit_rows) as f64);
            }
        }
        Ok(TrendModel {
            column: column.to_string(),
            method: "stl".into(),
            period,
            trend_window,
            fitted_rows: fit_rows,
            trend,
        })
    }

    pub fn detrend(&self, values: &[f64]) -> Vec<f64> {
        values.iter().zip(&self.trend).map(|(v, t)| v - t).collect()
    }

    /// Adds the stored trend back at the given rows.
    pub fn retrend(&self, rows: &[usize], residual: &[f64]) -> Vec<f64> {
        rows.iter().zip(residual).map(|(&r, v)| v + self.trend[r]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendFit {
    /// Fit on every row of the view, including later evaluation windows.
    Full,
    /// Fit on the leading training rows only and extrapolate.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetrendConfig {
    #[serde(default = "default_period")]
    pub period: usize,
    #[serde(default = "default_trend_window")]
    pub trend_window: usize,
    #[serde(default = "default_trend_fit")]
    pub fit: TrendFit,
}

fn default_period() -> usize {
    365
}
fn default_trend_window() -> usize {
    731
}
fn default_trend_fit() -> TrendFit {
    TrendFit::Full
}

impl Default for DetrendConfig {
    fn default() -> Self {
        DetrendConfig { period: 365, trend_window: 731, fit: TrendFit::Full }
    }
}

/// Model-ready `(X, y)`.
///
/// For tabular views `x_tab` holds every feature column. For the image view
/// `x_tab` is the scalar side channel and `x_img` the maps. The leading
/// `weather_columns` columns of `x_tab` are weather-derived.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    pub kind: ViewKind,
    pub x_tab: Array2<f64>,
    /// `(n_days, channels, nlat, nlon)`.
    pub x_img: Option<Array4<f32>>,
    pub y: Series,
    pub feature_names: Vec<String>,
    pub channel_names: Vec<String>,
    pub weather_columns: usize,
    pub trends: Vec<TrendModel>,
    pub target_trend: Option<TrendModel>,
    pub pca: Option<Pca>,
}

impl DatasetView {
    pub fn n_rows(&self) -> usize {
        self.y.values.len()
    }

    pub fn n_features(&self) -> usize {
        self.x_tab.ncols()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.y.time.dates()
    }

    /// Modeled target values (detrended when a target trend is present).
    pub fn target(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.y.values[r]).collect()
    }

    /// Target in original units.
    pub fn original_target(&self, rows: &[usize]) -> Vec<f64> {
        match &self.target_trend {
            Some(t) => t.retrend(rows, &self.target(rows)),
            None => self.target(rows),
        }
    }

    /// Maps model outputs back to original units.
    pub fn to_original(&self, rows: &[usize], predictions: &[f64]) -> Vec<f64> {
        match &self.target_trend {
            Some(t) => t.retrend(rows, predictions),
            None => predictions.to_vec(),
        }
    }

    pub fn is_detrended(&self) -> bool {
        self.target_trend.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if self.x_tab.nrows() != n || self.x_img.as_ref().is_some_and(|x| x.dim().0 != n) {
            return Err(FeaturesError::AxisMismatch);
        }
        if self.feature_names.len() != self.x_tab.ncols() {
            return Err(FeaturesError::AxisMismatch);
        }
        if self.x_tab.iter().any(|v| !v.is_finite()) {
            return Err(FeaturesError::NonFinite("x_tab".into()));
        }
        if self.y.values.iter().any(|v| !v.is_finite()) {
            return Err(FeaturesError::NonFinite("y".into()));
        }
        if let Some(img) = &self.x_img {
            if img.iter().any(|v| !v.is_finite()) {
                return Err(FeaturesError::NonFinite("x_img".into()));
            }
        }
        Ok(())
    }

    /// Removes long-term trends from the weather-derived columns and the
    /// target. `train_rows` bounds the fit when `cfg.fit` is `Train`.
    pub fn detrended(&self, cfg: &DetrendConfig, train_rows: usize) -> Result<DatasetView> {
        let fit_rows = match cfg.fit {
            TrendFit::Full => self.n_rows(),
            TrendFit::Train => train_rows,
        };
        let mut out = self.clone();
        out.trends.clear();
        let n_weather = if self.kind == ViewKind::Image { 0 } else { self.weather_columns };
        for c in 0..n_weather {
            let col: Vec<f64> = self.x_tab.column(c).to_vec();
            let tm = TrendModel::fit(&self.feature_names[c], &col, cfg.period, cfg.trend_window, fit_rows)?;
            for (r, v) in tm.detrend(&col).into_iter().enumerate() {
                out.x_tab[[r, c]] = v;
            }
            out.trends.push(tm);
        }
        let tm = TrendModel::fit(&self.y.name, &self.y.values, cfg.period, cfg.trend_window, fit_rows)?;
        out.y.values = tm.detrend(&self.y.values);
        out.target_trend = Some(tm);
        Ok(out)
    }

    /// Column indices a model sees: for the components view only the first
    /// `n_components` components are kept.
    pub fn tabular_columns(&self, n_components: Option<usize>) -> Vec<usize> {
        match (self.kind, n_components) {
            (ViewKind::Components, Some(k)) => {
                let k = k.min(self.weather_columns);
                (0..k).chain(self.weather_columns..self.n_features()).collect()
            }
            _ => (0..self.n_features()).collect(),
        }
    }
}

fn check_scalars(n: usize, scalars: &[FeatureColumn], target: &Series) -> Result<()> {
    if target.values.len() != n || scalars.iter().any(|c| c.series.values.len() != n) {
        return Err(FeaturesError::AxisMismatch);
    }
    Ok(())
}

fn scalar_block(scalars: &[FeatureColumn], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, scalars.len()), |(r, c)| scalars[c].series.values[r])
}

fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

/// Spatial means of the weighted stacks followed by the scalar columns.
pub fn build_average_view(weighted: &[GridStack], scalars: &[FeatureColumn], target: &Series) -> Result<DatasetView> {
    let avg = spatial_average(weighted)?;
    check_scalars(avg.nrows(), scalars, target)?;
    let x = hstack(&avg, &scalar_block(scalars, avg.nrows()));
    let names = weighted
        .iter()
        .map(|s| s.var.clone())
        .chain(scalars.iter().map(|c| c.kind.name().to_string()))
        .collect();
    let view = DatasetView {
        kind: ViewKind::Average,
        x_tab: x,
        x_img: None,
        y: target.clone(),
        feature_names: names,
        channel_names: vec![],
        weather_columns: weighted.len(),
        trends: vec![],
        target_trend: None,
        pca: None,
    };
    view.validate()?;
    Ok(view)
}

/// Rows = days, columns = every cell of every stack (stack-major).
pub fn flatten_maps(weighted: &[GridStack]) -> Result<Array2<f64>> {
    let first = weighted.first().ok_or(FeaturesError::Empty)?;
    if weighted.iter().any(|s| !s.same_axes(first)) {
        return Err(FeaturesError::AxisMismatch);
    }
    let nt = first.time.nt;
    let cells = first.spec.n_cells();
    let mut out = Array2::zeros((nt, cells * weighted.len()));
    for (v, stack) in weighted.iter().enumerate() {
        for t in 0..nt {
            let map = stack.values.index_axis(Axis(0), t);
            for (k, &x) in map.iter().enumerate() {
                out[[t, v * cells + k]] = x as f64;
            }
        }
    }
    Ok(out)
}

/// PCA of the concatenated flattened maps, fitted on the first `fit_rows`
/// rows, keeping up to `max_components` components.
pub fn build_components_view(
    weighted: &[GridStack],
    scalars: &[FeatureColumn],
    target: &Series,
    max_components: usize,
    fit_rows: usize,
) -> Result<DatasetView> {
    let flat = flatten_maps(weighted)?;
    let n = flat.nrows();
    check_scalars(n, scalars, target)?;
    let fit_rows = fit_rows.clamp(1, n);
    let k = max_components.min(fit_rows).min(flat.ncols());
    let pca = fit_pca(flat.slice(s![..fit_rows, ..]), k)?;
    let z = pca.transform(flat.view());
    let x = hstack(&z, &scalar_block(scalars, n));
    let names = (1..=k)
        .map(|c| format!("pc{c}"))
        .chain(scalars.iter().map(|c| c.kind.name().to_string()))
        .collect();
    let view = DatasetView {
        kind: ViewKind::Components,
        x_tab: x,
        x_img: None,
        y: target.clone(),
        feature_names: names,
        channel_names: vec![],
        weather_columns: k,
        trends: vec![],
        target_trend: None,
        pca: Some(pca),
    };
    view.validate()?;
    Ok(view)
}

/// One channel per weighted stack; scalars ride alongside in `x_tab`.
pub fn build_image_view(weighted: &[GridStack], scalars: &[FeatureColumn], target: &Series) -> Result<DatasetView> {
    let first = weighted.first().ok_or(FeaturesError::Empty)?;
    if weighted.iter().any(|s| !s.same_axes(first)) {
        return Err(FeaturesError::AxisMismatch);
    }
    let (nt, nlat, nlon) = first.values.dim();
    check_scalars(nt, scalars, target)?;
    let img = Array4::from_shape_fn((nt, weighted.len(), nlat, nlon), |(t, c, i, j)| weighted[c].values[[t, i, j]]);
    let view = DatasetView {
        kind: ViewKind::Image,
        x_tab: scalar_block(scalars, nt),
        x_img: Some(img),
        y: target.clone(),
        feature_names: scalars.iter().map(|c| c.kind.name().to_string()).collect(),
        channel_names: weighted.iter().map(|s| s.var.clone()).collect(),
        weather_columns: 0,
        trends: vec![],
        target_trend: None,
        pca: None,
    };
    view.validate()?;
    Ok(view)
}

/// Inclusive window ends: train ≤ `train_end` < val ≤ `val_end` < test ≤ `test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl Default for SplitSpec {
    fn default() -> Self {
        let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).expect("valid date");
        SplitSpec { train_end: d(2021, 12, 31), val_end: d(2022, 12, 31), test_end: d(2023, 12, 31) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChronoSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl ChronoSplit {
    pub fn train_val(&self) -> Vec<usize> {
        self.train.iter().chain(&self.val).copied().collect()
    }
}

pub fn make_chronological_split(dates: &[NaiveDate], spec: &SplitSpec) -> Result<ChronoSplit> {
    if !(spec.train_end < spec.val_end && spec.val_end < spec.test_end) {
        return Err(FeaturesError::WindowOutOfRange("window ends must be increasing".into()));
    }
    let (Some(first), Some(last)) = (dates.first(), dates.last()) else {
        return Err(FeaturesError::WindowOutOfRange("no rows".into()));
    };
    if *last < spec.test_end {
        return Err(FeaturesError::WindowOutOfRange(format!("data ends {last}, test window ends {}", spec.test_end)));
    }
    if *first > spec.train_end {
        return Err(FeaturesError::WindowOutOfRange(format!("data starts {first}, after train end {}", spec.train_end)));
    }
    let mut split = ChronoSplit { train: vec![], val: vec![], test: vec![] };
    for (r, d) in dates.iter().enumerate() {
        if *d <= spec.train_end {
            split.train.push(r);
        } else if *d <= spec.val_end {
            split.val.push(r);
        } else if *d <= spec.test_end {
            split.test.push(r);
        }
    }
    Ok(split)
}
