//! From raw registries, weather stacks and calendars to capacity-weighted
//! inputs and auxiliary feature columns.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Timelike};
use ndarray::{Array3, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::gridstore::{
    self, FacilityRecord, FacilityRegistry, GridError, GridSpec, GridStack, Sector, Series, TimeAxis, DAILY, HOURLY,
};
use crate::{par, rng};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("unknown sector at row {row}: {value:?}")]
    UnknownSector { row: usize, value: String },
    #[error("non-positive capacity {value} for facility {id}")]
    NegativeCapacity { id: String, value: f64 },
    #[error("facility {0} lies outside the grid domain")]
    OutOfDomain(String),
    #[error("duplicate facility id {0}")]
    DuplicateId(String),
    #[error("facility {0}: stop date precedes start date")]
    InvalidWindow(String),
    #[error("malformed facility row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },
    #[error("total capacity is zero over the whole axis")]
    AllZeroCapacity,
    #[error("weather and weight grids have different axes")]
    AxisMismatch,
    #[error("NaN weather value under positive weight at (t={t}, i={i}, j={j})")]
    NaNUnderWeight { t: usize, i: usize, j: usize },
    #[error("series is not aligned to whole UTC days")]
    MisalignedDay,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Registry plus the bookkeeping of what was discarded while reading it.
#[derive(Debug, Clone)]
pub struct LoadedRegistry {
    pub registry: FacilityRegistry,
    /// Rows of the requested sector, before dropping incomplete ones.
    pub sector_rows: usize,
    pub dropped_incomplete: usize,
    pub off_sector: usize,
}

impl LoadedRegistry {
    pub fn drop_fraction(&self) -> f64 {
        if self.sector_rows == 0 {
            0.0
        } else {
            self.dropped_incomplete as f64 / self.sector_rows as f64
        }
    }
}

pub fn load_facilities(path: impl AsRef<Path>, sector: Sector) -> Result<LoadedRegistry> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GridError::IoFailure {
        path: path.display().to_string(),
        source,
    })?;
    parse_facilities(&text, sector)
}

/// Rows with a missing capacity or location are dropped and counted; rows of
/// another sector are skipped. An empty sector cell is an error.
pub fn parse_facilities(text: &str, sector: Sector) -> Result<LoadedRegistry> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| GridError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GridError::Csv(format!("missing column {name}")))
    };
    let (c_id, c_sec, c_lat, c_lon, c_cap, c_start, c_stop) = (
        col("facility_id")?,
        col("sector")?,
        col("lat_deg")?,
        col("lon_deg")?,
        col("capacity_mw")?,
        col("start_date")?,
        col("stop_date")?,
    );

    let mut out = LoadedRegistry {
        registry: FacilityRegistry { sector, records: Vec::new() },
        sector_rows: 0,
        dropped_incomplete: 0,
        off_sector: 0,
    };
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
        let get = |c: usize| rec.get(c).unwrap_or("").trim();
        let sec_raw = get(c_sec);
        if sec_raw.is_empty() {
            return Err(IngestError::UnknownSector { row, value: sec_raw.to_string() });
        }
        if Sector::parse(sec_raw) != Some(sector) {
            out.off_sector += 1;
            continue;
        }
        out.sector_rows += 1;
        let id = get(c_id).to_string();
        let num = |s: &str| -> std::result::Result<Option<f64>, IngestError> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| IngestError::MalformedRow { row, msg: format!("not a number: {s:?}") })
        };
        let (lat, lon, cap) = (num(get(c_lat))?, num(get(c_lon))?, num(get(c_cap))?);
        let (Some(lat), Some(lon), Some(cap)) = (lat, lon, cap) else {
            out.dropped_incomplete += 1;
            continue;
        };
        if cap <= 0.0 {
            return Err(IngestError::NegativeCapacity { id, value: cap });
        }
        let date = |s: &str| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map_err(|_| IngestError::MalformedRow { row, msg: format!("bad date {s:?}") })
        };
        let start = date(get(c_start))?;
        let stop = match get(c_stop) {
            "" => None,
            s => Some(date(s)?),
        };
        if stop.is_some_and(|s| s < start) {
            return Err(IngestError::InvalidWindow(id));
        }
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId(id));
        }
        out.registry.records.push(FacilityRecord { id, sector, lat, lon, capacity_mw: cap, start, stop });
    }
    Ok(out)
}

/// Installed capacity per cell and timestep, `P[t, i, j]` in MW.
#[derive(Debug, Clone)]
pub struct CapacityGrid {
    pub spec: GridSpec,
    pub time: TimeAxis,
    pub capacity_mw: Array3<f64>,
    /// Facilities further than one cell outside the grid.
    pub rejected: Vec<String>,
}

impl CapacityGrid {
    /// Σ over cells at each timestep.
    pub fn totals(&self) -> Vec<f64> {
        self.capacity_mw.axis_iter(Axis(0)).map(|m| m.sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffGrid {
    /// Skip and list the facility in [`CapacityGrid::rejected`].
    #[default]
    Reject,
    Error,
}

/// Adds every facility's capacity to its nearest cell for each timestep it
/// is active. Facilities up to one cell outside the bounds snap to the edge.
pub fn assign_to_grid(registry: &FacilityRegistry, spec: &GridSpec, time: &TimeAxis, policy: OffGrid) -> Result<CapacityGrid> {
    let mut cap = Array3::<f64>::zeros((time.nt, spec.nlat, spec.nlon));
    let mut rejected = Vec::new();
    let dates = time.dates();
    for f in &registry.records {
        let (i, j) = spec.nearest_index(f.lat, f.lon);
        let inside = |k: i64, n: usize| k >= -1 && k <= n as i64;
        if !inside(i, spec.nlat) || !inside(j, spec.nlon) {
            match policy {
                OffGrid::Reject => {
                    rejected.push(f.id.clone());
                    continue;
                }
                OffGrid::Error => return Err(IngestError::OutOfDomain(f.id.clone())),
            }
        }
        let i = i.clamp(0, spec.nlat as i64 - 1) as usize;
        let j = j.clamp(0, spec.nlon as i64 - 1) as usize;
        for (t, d) in dates.iter().enumerate() {
            if f.active_on(*d) {
                cap[[t, i, j]] += f.capacity_mw;
            }
        }
    }
    Ok(CapacityGrid { spec: *spec, time: *time, capacity_mw: cap, rejected })
}

/// Capacity weights normalized over space and time: `w = P / Σ_{t,i,j} P`.
#[derive(Debug, Clone)]
pub struct WeightGrid {
    pub spec: GridSpec,
    pub time: TimeAxis,
    pub w: Array3<f64>,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn compute_weights(cap: &CapacityGrid) -> Result<WeightGrid> {
    let total = compensated_sum(cap.capacity_mw.iter());
    if !(total > 0.0) {
        return Err(IngestError::AllZeroCapacity);
    }
    let w = cap.capacity_mw.mapv(|p| p / total);
    Ok(WeightGrid { spec: cap.spec, time: cap.time, w })
}

/// Elementwise `weather * w` in f64. NaN weather under zero weight is masked
/// to 0; under positive weight it is an error.
pub fn weight_weather_f64(stack: &GridStack, w: &WeightGrid) -> Result<Array3<f64>> {
    if stack.spec != w.spec || stack.time != w.time {
        return Err(IngestError::AxisMismatch);
    }
    let mut out = Array3::<f64>::zeros(w.w.raw_dim());
    let mut bad = None;
    Zip::indexed(&mut out).and(&stack.values).and(&w.w).for_each(|(t, i, j), o, &x, &wt| {
        if x.is_nan() {
            if wt > 0.0 && bad.is_none() {
                bad = Some((t, i, j));
            }
            *o = 0.0;
        } else {
            *o = x as f64 * wt;
        }
    });
    if let Some((t, i, j)) = bad {
        return Err(IngestError::NaNUnderWeight { t, i, j });
    }
    Ok(out)
}

/// Weighted stack named `w_<var>`, stored as f32.
pub fn weight_weather(stack: &GridStack, w: &WeightGrid) -> Result<GridStack> {
    let prod = weight_weather_f64(stack, w)?;
    Ok(GridStack {
        spec: stack.spec,
        time: stack.time,
        var: format!("w_{}", stack.var),
        unit: stack.unit.clone(),
        values: prod.mapv(|v| v as f32),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    TimeIndex,
    DoyCos,
    SunshineHours,
    Price,
}

impl FeatureKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureKind::TimeIndex => "time_index",
            FeatureKind::DoyCos => "doy_cos",
            FeatureKind::SunshineHours => "sunshine_hours",
            FeatureKind::Price => "price",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub kind: FeatureKind,
    pub series: Series,
}

pub fn doy_cos(doy: u32) -> f64 {
    (2.0 * PI * doy as f64 / 365.0).cos()
}

/// Solar declination in degrees for a day of year.
pub fn declination_deg(doy: u32) -> f64 {
    -23.44 * (2.0 * PI * (doy as f64 + 10.0) / 365.25).cos()
}

/// Day length in hours from sunrise to sunset, clamped to `[0, 24]`.
pub fn sunshine_hours(doy: u32, lat_deg: f64) -> f64 {
    let phi = lat_deg.to_radians();
    let delta = declination_deg(doy).to_radians();
    let x = (-phi.tan() * delta.tan()).clamp(-1.0, 1.0);
    (2.0 / 15.0 * x.acos().to_degrees()).clamp(0.0, 24.0)
}

/// Day length for every grid cell and timestep.
pub fn sunshine_grid(time: &TimeAxis, spec: &GridSpec) -> Array3<f64> {
    let dates = time.dates();
    Array3::from_shape_fn((time.nt, spec.nlat, spec.nlon), |(t, i, _)| {
        sunshine_hours(dates[t].ordinal(), spec.center(i, 0).0)
    })
}

/// `time_index` always; `doy_cos` for wind, day length at the reference
/// point for solar. The longitude does not enter the day-length formula.
pub fn temporal_features(time: &TimeAxis, lat_ref: f64, _lon_ref: f64, sector: Sector) -> Vec<FeatureColumn> {
    let dates = time.dates();
    let index = Series::new(*time, "time_index", "", (0..time.nt).map(|k| k as f64).collect());
    let seasonal = match sector {
        Sector::Wind => FeatureColumn {
            kind: FeatureKind::DoyCos,
            series: Series::new(*time, "doy_cos", "", dates.iter().map(|d| doy_cos(d.ordinal())).collect()),
        },
        Sector::Solar => FeatureColumn {
            kind: FeatureKind::SunshineHours,
            series: Series::new(
                *time,
                "sunshine_hours",
                "h",
                dates.iter().map(|d| sunshine_hours(d.ordinal(), lat_ref)).collect(),
            ),
        },
    };
    vec![FeatureColumn { kind: FeatureKind::TimeIndex, series: index }, seasonal]
}

pub fn read_price_csv(path: impl AsRef<Path>) -> Result<FeatureColumn> {
    let mut s = gridstore::read_series_csv(path, "price_eur_mwh")?;
    s.unit = "EUR/MWh".into();
    Ok(FeatureColumn { kind: FeatureKind::Price, series: s })
}

/// Kraskov–Stögbauer–Grassberger estimator (algorithm 1) in nats, max-norm.
///
/// Both inputs get a uniform jitter of `1e-10 * std` to break ties. Returns
/// 0 for a constant input.
pub fn mutual_information_ksg(x: &[f64], y: &[f64], k: usize, seed: u64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(IngestError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n <= k || std_dev(x) == 0.0 || std_dev(y) == 0.0 {
        return Ok(0.0);
    }
    let xj = jitter(x, rng::derive(seed, 0));
    let yj = jitter(y, rng::derive(seed, 1));
    let mut xs = xj.clone();
    let mut ys = yj.clone();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);

    let terms = par::map_range(n, |i| {
        // k smallest joint distances, ascending
        let mut best = vec![f64::INFINITY; k];
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = (xj[i] - xj[j]).abs().max((yj[i] - yj[j]).abs());
            if d < best[k - 1] {
                let mut p = k - 1;
                while p > 0 && best[p - 1] > d {
                    best[p] = best[p - 1];
                    p -= 1;
                }
                best[p] = d;
            }
        }
        let eps = best[k - 1];
        let nx = count_open(&xs, xj[i], eps) - 1;
        let ny = count_open(&ys, yj[i], eps) - 1;
        digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0)
    });
    let mean = terms.iter().sum::<f64>() / n as f64;
    Ok(digamma(k as f64) + digamma(n as f64) - mean)
}

/// Points of a sorted slice strictly within `eps` of `c` (including `c`).
fn count_open(sorted: &[f64], c: f64, eps: f64) -> usize {
    let hi = sorted.partition_point(|&v| v < c + eps);
    let lo = sorted.partition_point(|&v| v <= c - eps);
    hi - lo
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn jitter(v: &[f64], seed: u64) -> Vec<f64> {
    let amp = 1e-10 * std_dev(v);
    let mut r = rng::seeded(seed);
    v.iter().map(|x| x + amp * (2.0 * r.random::<f64>() - 1.0)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiScore {
    pub name: String,
    pub mi_nats: f64,
    /// Score divided by the best candidate's score.
    pub normalized: f64,
    pub selected: bool,
}

/// Scores each candidate against the target, normalizes by the best score
/// and keeps candidates at or above `threshold`. Output order follows the input.
pub fn select_variables_mi(
    candidates: &[Series],
    target: &Series,
    threshold: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<MiScore>> {
    let raw: Vec<f64> = candidates
        .iter()
        .enumerate()
        .map(|(c, s)| {
            mutual_information_ksg(&s.values, &target.values, k, rng::derive(seed, c as u64)).map(|v| v.max(0.0))
        })
        .collect::<Result<_>>()?;
    let best = raw.iter().cloned().fold(0.0, f64::max);
    Ok(candidates
        .iter()
        .zip(&raw)
        .map(|(s, &mi)| {
            let normalized = if best > 0.0 { mi / best } else { 0.0 };
            MiScore { name: s.name.clone(), mi_nats: mi, normalized, selected: best > 0.0 && normalized >= threshold }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Sum,
}

impl Aggregation {
    /// Accumulated variables are summed, everything else averaged.
    pub fn for_variable(var: &str) -> Aggregation {
        let base = var.strip_prefix("w_").unwrap_or(var);
        match base {
            "tp" | "ssrd" | "e" | "ro" => Aggregation::Sum,
            _ => Aggregation::Mean,
        }
    }
}

fn daily_axis(time: &TimeAxis) -> Result<TimeAxis> {
    if time.dt != HOURLY || !time.nt.is_multiple_of(24) || time.t0.hour() != 0 || time.t0.minute() != 0 || time.t0.second() != 0 {
        return Err(IngestError::MisalignedDay);
    }
    Ok(TimeAxis { t0: time.t0, dt: DAILY, nt: time.nt / 24 })
}

fn reduce(chunk: impl Iterator<Item = f64>, how: Aggregation) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in chunk {
        s += v;
        n += 1;
    }
    match how {
        Aggregation::Sum => s,
        Aggregation::Mean => s / n as f64,
    }
}

/// Hourly to daily. Daily input is returned unchanged.
pub trait DailyAggregate: Sized {
    fn aggregate_to_daily(&self, how: Aggregation) -> Result<Self>;
}

impl DailyAggregate for Series {
    fn aggregate_to_daily(&self, how: Aggregation) -> Result<Self> {
        if self.time.dt == DAILY {
            return Ok(self.clone());
        }
        let time = daily_axis(&self.time)?;
        let values = self.values.chunks(24).map(|c| reduce(c.iter().copied(), how)).collect();
        Ok(Series { time, name: self.name.clone(), unit: self.unit.clone(), values })
    }
}

impl DailyAggregate for GridStack {
    fn aggregate_to_daily(&self, how: Aggregation) -> Result<Self> {
        if self.time.dt == DAILY {
            return Ok(self.clone());
        }
        let time = daily_axis(&self.time)?;
        let (nlat, nlon) = (self.spec.nlat, self.spec.nlon);
        let values = Array3::from_shape_fn((time.nt, nlat, nlon), |(d, i, j)| {
            reduce((0..24).map(|h| self.values[[d * 24 + h, i, j]] as f64), how) as f32
        });
        Ok(GridStack { spec: self.spec, time, var: self.var.clone(), unit: self.unit.clone(), values })
    }
}
