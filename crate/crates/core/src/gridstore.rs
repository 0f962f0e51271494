//! Spatiotemporal data model: grids, time axes, gridded stacks, scalar
//! series and facility registries, plus their on-disk formats.
//!
//! Grids are stored in the GSF container: the magic `GSF1\n`, a one-line
//! JSON header, `\n`, then `nt * nlat * nlon` little-endian `f32` values in
//! time-major, then latitude, then longitude order. NaN is the only missing
//! value sentinel.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GSF_MAGIC: &[u8; 5] = b"GSF1\n";
pub const HOURLY: i64 = 3600;
pub const DAILY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("magic mismatch: file does not start with GSF1")]
    MagicMismatch,
    #[error("header parse error: {0}")]
    HeaderParse(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    PayloadTruncated { expected: usize, found: usize },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-uniform timestep at row {row}")]
    NonUniformTimestep { row: usize },
    #[error("duplicate timestamp at row {row}")]
    DuplicateTimestamp { row: usize },
    #[error("non-numeric value {value:?} at row {row}")]
    NonNumericValue { row: usize, value: String },
    #[error("unsupported timestep of {0} s (expected 3600 or 86400)")]
    UnsupportedTimestep(i64),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, GridError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GridError + '_ {
    move |source| GridError::IoFailure {
        path: path.display().to_string(),
        source,
    }
}

/// Regular lat/lon grid anchored at the south-west cell center, ascending in
/// both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat0: f64,
    pub dlat: f64,
    pub nlat: usize,
    pub lon0: f64,
    pub dlon: f64,
    pub nlon: usize,
}

impl Default for GridSpec {
    /// Mainland France at 0.25 degrees: 42.5..51 N, -4.55..7.95 E.
    fn default() -> Self {
        GridSpec::from_bounds(42.5, 51.0, -4.55, 7.95, 0.25)
    }
}

impl GridSpec {
    pub fn new(lat0: f64, dlat: f64, nlat: usize, lon0: f64, dlon: f64, nlon: usize) -> Result<Self> {
        let spec = GridSpec { lat0, dlat, nlat, lon0, dlon, nlon };
        spec.validate()?;
        Ok(spec)
    }

    /// Inclusive bounds with a common step.
    pub fn from_bounds(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, step: f64) -> Self {
        let nlat = ((lat_max - lat_min) / step).round() as usize + 1;
        let nlon = ((lon_max - lon_min) / step).round() as usize + 1;
        GridSpec { lat0: lat_min, dlat: step, nlat, lon0: lon_min, dlon: step, nlon }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.lat0.is_finite() && self.lon0.is_finite();
        if !finite || !(self.dlat > 0.0) || !(self.dlon > 0.0) || self.nlat == 0 || self.nlon == 0 {
            return Err(GridError::InvalidGrid(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.lat0 + i as f64 * self.dlat, self.lon0 + j as f64 * self.dlon)
    }

    /// Fractional-free nearest index, possibly outside the grid.
    pub fn nearest_index(&self, lat: f64, lon: f64) -> (i64, i64) {
        (
            ((lat - self.lat0) / self.dlat).round() as i64,
            ((lon - self.lon0) / self.dlon).round() as i64,
        )
    }

    /// Nearest cell if it lies on the grid.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let (i, j) = self.nearest_index(lat, lon);
        if i >= 0 && j >= 0 && (i as usize) < self.nlat && (j as usize) < self.nlon {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }
}

/// Uniform UTC time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t0: DateTime<Utc>,
    pub dt: i64,
    pub nt: usize,
}

impl TimeAxis {
    pub fn new(t0: DateTime<Utc>, dt: i64, nt: usize) -> Result<Self> {
        if dt != HOURLY && dt != DAILY {
            return Err(GridError::UnsupportedTimestep(dt));
        }
        Ok(TimeAxis { t0, dt, nt })
    }

    pub fn daily(start: NaiveDate, nt: usize) -> Self {
        TimeAxis { t0: midnight(start), dt: DAILY, nt }
    }

    pub fn hourly(start: NaiveDate, nt: usize) -> Self {
        TimeAxis { t0: midnight(start), dt: HOURLY, nt }
    }

    pub fn at(&self, k: usize) -> DateTime<Utc> {
        self.t0 + Duration::seconds(self.dt * k as i64)
    }

    pub fn date(&self, k: usize) -> NaiveDate {
        self.at(k).date_naive()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.nt).map(|k| self.date(k)).collect()
    }

    pub fn is_daily(&self) -> bool {
        self.dt == DAILY
    }
}

pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS`, `YYYY-MM-DDTHH:MM:SS` and bare dates, all UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(midnight)
}

/// One weather variable on a grid over time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    pub spec: GridSpec,
    pub time: TimeAxis,
    pub var: String,
    pub unit: String,
    /// Shape `(nt, nlat, nlon)`.
    pub values: Array3<f32>,
}

impl GridStack {
    pub fn new(spec: GridSpec, time: TimeAxis, var: &str, unit: &str, values: Array3<f32>) -> Result<Self> {
        let stack = GridStack { spec, time, var: var.to_string(), unit: unit.to_string(), values };
        stack.validate()?;
        Ok(stack)
    }

    pub fn filled(spec: GridSpec, time: TimeAxis, var: &str, unit: &str, value: f32) -> Self {
        let values = Array3::from_elem((time.nt, spec.nlat, spec.nlon), value);
        GridStack { spec, time, var: var.to_string(), unit: unit.to_string(), values }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.var.is_empty() {
            return Err(GridError::HeaderParse("variable name must be nonempty".into()));
        }
        let shape = self.values.shape();
        if shape != [self.time.nt, self.spec.nlat, self.spec.nlon] {
            return Err(GridError::HeaderParse(format!(
                "payload shape {:?} does not match header ({}, {}, {})",
                shape, self.time.nt, self.spec.nlat, self.spec.nlon
            )));
        }
        Ok(())
    }

    pub fn same_axes(&self, other: &GridStack) -> bool {
        self.spec == other.spec && self.time == other.time
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GsfHeader {
    var: String,
    unit: String,
    lat0: f64,
    dlat: f64,
    nlat: usize,
    lon0: f64,
    dlon: f64,
    nlon: usize,
    t0: String,
    dt: i64,
    nt: usize,
}

pub fn encode_gsf(stack: &GridStack) -> Result<Vec<u8>> {
    stack.validate()?;
    let header = GsfHeader {
        var: stack.var.clone(),
        unit: stack.unit.clone(),
        lat0: stack.spec.lat0,
        dlat: stack.spec.dlat,
        nlat: stack.spec.nlat,
        lon0: stack.spec.lon0,
        dlon: stack.spec.dlon,
        nlon: stack.spec.nlon,
        t0: format_timestamp(&stack.time.t0),
        dt: stack.time.dt,
        nt: stack.time.nt,
    };
    let json = serde_json::to_string(&header).map_err(|e| GridError::HeaderParse(e.to_string()))?;
    let mut out = Vec::with_capacity(GSF_MAGIC.len() + json.len() + 1 + stack.values.len() * 4);
    out.extend_from_slice(GSF_MAGIC);
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    // iter() walks logical (t, lat, lon) order regardless of memory layout
    for v in stack.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_gsf(bytes: &[u8]) -> Result<GridStack> {
    if bytes.len() < GSF_MAGIC.len() || &bytes[..GSF_MAGIC.len()] != GSF_MAGIC {
        return Err(GridError::MagicMismatch);
    }
    let rest = &bytes[GSF_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| GridError::HeaderParse("missing header terminator".into()))?;
    let header: GsfHeader =
        serde_json::from_slice(&rest[..nl]).map_err(|e| GridError::HeaderParse(e.to_string()))?;
    let payload = &rest[nl + 1..];
    let t0 = parse_timestamp(&header.t0)
        .ok_or_else(|| GridError::HeaderParse(format!("bad t0 {:?}", header.t0)))?;
    let time = TimeAxis::new(t0, header.dt, header.nt)
        .map_err(|e| GridError::HeaderParse(e.to_string()))?;
    let spec = GridSpec {
        lat0: header.lat0,
        dlat: header.dlat,
        nlat: header.nlat,
        lon0: header.lon0,
        dlon: header.dlon,
        nlon: header.nlon,
    };
    spec.validate().map_err(|e| GridError::HeaderParse(e.to_string()))?;
    if header.var.is_empty() {
        return Err(GridError::HeaderParse("variable name must be nonempty".into()));
    }
    let n = header.nt * header.nlat * header.nlon;
    let expected = n * 4;
    if payload.len() != expected {
        return Err(GridError::PayloadTruncated { expected, found: payload.len() });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let values = Array3::from_shape_vec((header.nt, header.nlat, header.nlon), data)
        .map_err(|e| GridError::HeaderParse(e.to_string()))?;
    Ok(GridStack { spec, time, var: header.var, unit: header.unit, values })
}

pub fn read_gsf(path: impl AsRef<Path>) -> Result<GridStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_gsf(&bytes)
}

pub fn write_gsf(stack: &GridStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_gsf(stack)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Scalar time series on a uniform axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub time: TimeAxis,
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(time: TimeAxis, name: &str, unit: &str, values: Vec<f64>) -> Self {
        debug_assert_eq!(time.nt, values.len());
        Series { time, name: name.to_string(), unit: unit.to_string(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads `timestamp_utc,<value_column>`; infers the step and rejects gaps,
/// duplicates and non-numeric (including NaN) cells.
pub fn read_series_csv(path: impl AsRef<Path>, value_column: &str) -> Result<Series> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_series_csv(&text, value_column)
}

pub fn parse_series_csv(text: &str, value_column: &str) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| GridError::Csv(e.to_string()))?.clone();
    let tcol = headers
        .iter()
        .position(|h| h == "timestamp_utc")
        .ok_or_else(|| GridError::Csv("missing timestamp_utc column".into()))?;
    let vcol = headers
        .iter()
        .position(|h| h == value_column)
        .ok_or_else(|| GridError::Csv(format!("missing {value_column} column")))?;

    let mut stamps: Vec<DateTime<Utc>> = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
        let ts = rec.get(tcol).unwrap_or("");
        let t = parse_timestamp(ts).ok_or_else(|| GridError::Csv(format!("bad timestamp {ts:?} at row {row}")))?;
        let raw = rec.get(vcol).unwrap_or("");
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| GridError::NonNumericValue { row, value: raw.to_string() })?;
        stamps.push(t);
        values.push(v);
    }
    if stamps.len() < 2 {
        return Err(GridError::Csv("need at least two rows to infer the timestep".into()));
    }
    let dt = (stamps[1] - stamps[0]).num_seconds();
    for (k, w) in stamps.windows(2).enumerate() {
        let d = (w[1] - w[0]).num_seconds();
        if d == 0 {
            return Err(GridError::DuplicateTimestamp { row: k + 1 });
        }
        if d != dt {
            return Err(GridError::NonUniformTimestep { row: k + 1 });
        }
    }
    // a step that is neither hourly nor daily means rows are missing
    if dt != HOURLY && dt != DAILY {
        return Err(GridError::NonUniformTimestep { row: 1 });
    }
    let time = TimeAxis::new(stamps[0], dt, stamps.len())?;
    Ok(Series { time, name: value_column.to_string(), unit: String::new(), values })
}

pub fn write_series_csv(series: &Series, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let io = io_err(path);
    let mut body = format!("timestamp_utc,{}\n", series.name);
    for (k, v) in series.values.iter().enumerate() {
        body.push_str(&format_timestamp(&series.time.at(k)));
        body.push(',');
        body.push_str(&v.to_string());
        body.push('\n');
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Solar,
    Wind,
}

impl Sector {
    pub fn parse(s: &str) -> Option<Sector> {
        match s.trim().to_ascii_lowercase().as_str() {
            "solar" | "pv" => Some(Sector::Solar),
            "wind" => Some(Sector::Wind),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Sector::Solar => "Solar",
            Sector::Wind => "Wind",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityRecord {
    pub id: String,
    pub sector: Sector,
    pub lat: f64,
    pub lon: f64,
    pub capacity_mw: f64,
    pub start: NaiveDate,
    pub stop: Option<NaiveDate>,
}

impl FacilityRecord {
    pub fn active_on(&self, date: NaiveDate) -> bool {
        date >= self.start && self.stop.is_none_or(|s| date <= s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityRegistry {
    pub sector: Sector,
    pub records: Vec<FacilityRecord>,
}

impl FacilityRegistry {
    pub fn total_capacity_on(&self, date: NaiveDate) -> f64 {
        self.records.iter().filter(|r| r.active_on(date)).map(|r| r.capacity_mw).sum()
    }
}

pub const FACILITY_HEADER: &str = "facility_id,sector,lat_deg,lon_deg,capacity_mw,start_date,stop_date";

pub fn write_facilities_csv(records: &[FacilityRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from(FACILITY_HEADER);
    body.push('\n');
    for r in records {
        let stop = r.stop.map(|d| d.to_string()).unwrap_or_default();
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id,
            r.sector.as_str(),
            r.lat,
            r.lon,
            r.capacity_mw,
            r.start,
            stop
        ));
    }
    fs::write(path, body).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(nt: usize) -> TimeAxis {
        TimeAxis::daily(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), nt)
    }

    #[test]
    fn default_grid_matches_france_domain() {
        let g = GridSpec::default();
        assert_eq!((g.nlat, g.nlon), (35, 51));
        let (lat, lon) = g.center(34, 50);
        assert!((lat - 51.0).abs() < 1e-12);
        assert!((lon - 7.95).abs() < 1e-12);
    }

    #[test]
    fn center_inverse_is_exact() {
        let g = GridSpec::default();
        for i in 0..g.nlat {
            for j in 0..g.nlon {
                let (lat, lon) = g.center(i, j);
                assert_eq!(g.cell_of(lat, lon), Some((i, j)));
            }
        }
    }

    #[test]
    fn single_cell_roundtrip_is_bit_identical() {
        let spec = GridSpec::new(0.0, 1.0, 1, 0.0, 1.0, 1).unwrap();
        let s = GridStack::filled(spec, axis(1), "t2m", "K", 42.0);
        let bytes = encode_gsf(&s).unwrap();
        let back = decode_gsf(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_gsf(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let spec = GridSpec::new(0.0, 1.0, 1, 0.0, 1.0, 1).unwrap();
        let s = GridStack::filled(spec, axis(2), "t2m", "K", 1.0);
        let mut bytes = encode_gsf(&s).unwrap();
        bytes.truncate(bytes.len() - 4);
        match decode_gsf(&bytes) {
            Err(GridError::PayloadTruncated { expected, found }) => {
                assert_eq!((expected, found), (8, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_half_stack_sum() {
        let s = GridStack::filled(GridSpec::default(), axis(3), "ssrd", "J m-2", 0.5);
        let back = decode_gsf(&encode_gsf(&s).unwrap()).unwrap();
        let sum: f64 = back.values.iter().map(|&v| v as f64).sum();
        assert_eq!(sum, 2677.5);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(decode_gsf(b"GSF2\n{}\n"), Err(GridError::MagicMismatch)));
        assert!(matches!(decode_gsf(b""), Err(GridError::MagicMismatch)));
    }

    #[test]
    fn empty_var_rejected_at_write() {
        let spec = GridSpec::new(0.0, 1.0, 1, 0.0, 1.0, 1).unwrap();
        let s = GridStack::filled(spec, axis(1), "", "K", 0.0);
        assert!(matches!(encode_gsf(&s), Err(GridError::HeaderParse(_))));
    }

    #[test]
    fn nan_survives_and_writes_are_deterministic() {
        let spec = GridSpec::new(0.0, 1.0, 2, 0.0, 1.0, 2).unwrap();
        let mut s = GridStack::filled(spec, axis(2), "tp", "m", 1.5);
        s.values[[1, 0, 1]] = f32::NAN;
        let a = encode_gsf(&s).unwrap();
        let b = encode_gsf(&s).unwrap();
        assert_eq!(a, b);
        let back = decode_gsf(&a).unwrap();
        assert!(back.values[[1, 0, 1]].is_nan());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.gsf");
        let s = GridStack::filled(GridSpec::default(), axis(2), "t2m", "K", 280.25);
        write_gsf(&s, &p).unwrap();
        let back = read_gsf(&p).unwrap();
        write_gsf(&back, dir.path().join("y.gsf")).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(dir.path().join("y.gsf")).unwrap());
    }

    #[test]
    fn series_csv_parsing() {
        let ok = "timestamp_utc,power_mw\n2020-01-01T00:00:00Z,1.0\n2020-01-01T01:00:00Z,2.0\n2020-01-01T02:00:00Z,3.0\n";
        let s = parse_series_csv(ok, "power_mw").unwrap();
        assert_eq!(s.time.dt, 3600);
        assert_eq!(s.values, vec![1.0, 2.0, 3.0]);

        let gap = "timestamp_utc,v\n2020-01-01T00:00:00Z,1\n2020-01-01T02:00:00Z,2\n";
        assert!(matches!(parse_series_csv(gap, "v"), Err(GridError::NonUniformTimestep { .. })));
        let gap2 = "timestamp_utc,v\n2020-01-01T00:00:00Z,1\n2020-01-01T01:00:00Z,2\n2020-01-01T03:00:00Z,2\n";
        assert!(matches!(parse_series_csv(gap2, "v"), Err(GridError::NonUniformTimestep { row: 2 })));
        let dup = "timestamp_utc,v\n2020-01-01T00:00:00Z,1\n2020-01-01T01:00:00Z,2\n2020-01-01T01:00:00Z,2\n";
        assert!(matches!(parse_series_csv(dup, "v"), Err(GridError::DuplicateTimestamp { row: 2 })));
        let bad = "timestamp_utc,v\n2020-01-01T00:00:00Z,1\n2020-01-01T01:00:00Z,abc\n";
        assert!(matches!(parse_series_csv(bad, "v"), Err(GridError::NonNumericValue { row: 1, .. })));
        let nan = "timestamp_utc,v\n2020-01-01T00:00:00Z,1\n2020-01-01T01:00:00Z,NaN\n";
        assert!(matches!(parse_series_csv(nan, "v"), Err(GridError::NonNumericValue { .. })));
    }

    #[test]
    fn series_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = Series::new(axis(3), "price_eur_mwh", "", vec![1.5, -2.0, 0.1]);
        write_series_csv(&s, &p).unwrap();
        let back = read_series_csv(&p, "price_eur_mwh").unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.time, s.time);
    }
}
