//! Desk-scale synthetic datasets with a known generating process.
//!
//! Layout written by [`synth_generate`]:
//!
//! ```text
//! weather/<var>.gsf   daily weather stacks
//! facilities.csv      registry; units open over time along the growth curve
//! target.csv          timestamp_utc,power_mw
//! price.csv           timestamp_utc,price_eur_mwh
//! truth.json          generating parameters and the daily installed capacity
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use gridcast_core::gridstore::{self, FacilityRecord, GridSpec, GridStack, Sector, Series, TimeAxis};
use gridcast_core::rng;
use ndarray::Array3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weather variable names, in the order variables are generated.
pub const VARIABLES: [&str; 8] = ["ssrd", "t2m", "tcc", "u100", "v100", "tp", "sp", "d2m"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Linear,
    QuadraticSaturating,
}

/// `mw_per_year` of new capacity for `years` years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSegment {
    pub years: f64,
    pub mw_per_year: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_days: usize,
    pub start: NaiveDate,
    pub sector: Sector,
    pub grid: GridSpec,
    pub n_variables: usize,
    pub initial_capacity_mw: f64,
    /// Piecewise-constant build rate; capacity stays flat after the last segment.
    pub growth: Vec<GrowthSegment>,
    pub facility_mw: f64,
    /// Seasonal amplitude per variable; missing entries use built-in values.
    pub seasonal_amplitudes: Vec<f64>,
    /// Noise on the capacity factor, relative to its mean.
    pub noise_sigma: f64,
    pub link: Link,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_days: 3000,
            start: NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date"),
            sector: Sector::Solar,
            grid: GridSpec { lat0: 43.0, dlat: 1.0, nlat: 6, lon0: -2.0, dlon: 1.25, nlon: 8 },
            n_variables: 3,
            initial_capacity_mw: 500.0,
            growth: vec![GrowthSegment { years: 100.0, mw_per_year: 600.0 }],
            facility_mw: 20.0,
            seasonal_amplitudes: vec![],
            noise_sigma: 0.05,
            link: Link::Linear,
            seed: 0,
        }
    }
}

const DEFAULT_AMPLITUDES: [f64; 8] = [1.0, 0.7, 0.4, 0.3, 0.3, 0.2, 0.1, 0.5];
const MEAN_CAPACITY_FACTOR: f64 = 0.15;
/// Saturation point of the quadratic link, relative to the mean signal.
const SATURATION: f64 = 1.25;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.n_days < 2 {
            return bad("n_days must be at least 2");
        }
        if self.grid.validate().is_err() {
            return bad("grid must have positive steps and sizes");
        }
        if !(1..=VARIABLES.len()).contains(&self.n_variables) {
            return bad("n_variables must be between 1 and 8");
        }
        if !(self.initial_capacity_mw > 0.0) || !(self.facility_mw > 0.0) {
            return bad("capacities must be positive");
        }
        if self.growth.iter().any(|g| !(g.years >= 0.0) || !(g.mw_per_year >= 0.0)) {
            return bad("growth segments must be non-negative");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be non-negative");
        }
        if self.seasonal_amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("seasonal amplitudes must be finite and non-negative");
        }
        Ok(())
    }

    pub fn variables(&self) -> Vec<&'static str> {
        VARIABLES[..self.n_variables].to_vec()
    }

    fn amplitude(&self, v: usize) -> f64 {
        self.seasonal_amplitudes.get(v).copied().unwrap_or(DEFAULT_AMPLITUDES[v])
    }

    /// Planned capacity after `day` days.
    pub fn capacity_curve(&self, day: usize) -> f64 {
        let mut years_left = day as f64 / 365.25;
        let mut c = self.initial_capacity_mw;
        for g in &self.growth {
            let dt = years_left.min(g.years);
            c += dt * g.mw_per_year;
            years_left -= dt;
            if years_left <= 0.0 {
                break;
            }
        }
        c
    }

    fn link(&self, r: f64) -> f64 {
        match self.link {
            Link::Linear => r,
            Link::QuadraticSaturating => {
                if r < SATURATION {
                    r * (2.0 - r / SATURATION) / (2.0 - 1.0 / SATURATION)
                } else {
                    SATURATION / (2.0 - 1.0 / SATURATION)
                }
            }
        }
    }
}

/// Generating parameters recorded next to the data for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SynthSpec,
    pub variables: Vec<String>,
    /// Signal is `Σ_v beta_v · (capacity-weighted mean of variable v)`.
    pub betas: Vec<f64>,
    /// Mean signal used to normalize before the link.
    pub signal_scale: f64,
    pub capacity_mw: Vec<f64>,
    /// Noise-free target.
    pub clean_power_mw: Vec<f64>,
}

fn smooth_modes(grid: &GridSpec) -> Vec<Array3<f64>> {
    let (nlat, nlon) = (grid.nlat as f64, grid.nlon as f64);
    [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.5, 2.0)]
        .iter()
        .map(|&(a, b)| {
            Array3::from_shape_fn((1, grid.nlat, grid.nlon), |(_, i, j)| {
                (PI * a * (i as f64 + 0.5) / nlat).cos() * (PI * b * (j as f64 + 0.5) / nlon).cos()
            })
        })
        .collect()
}

struct Generated {
    facilities: Vec<FacilityRecord>,
    stacks: Vec<GridStack>,
    target: Series,
    price: Series,
    truth: Truth,
}

fn generate(spec: &SynthSpec) -> Result<Generated> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let n = spec.n_days;
    let g = spec.grid;
    let time = TimeAxis::daily(spec.start, n);
    let dates = time.dates();
    let normal = |r: &mut rng::Rng| -> f64 { StandardNormal.sample(r) };

    // Facilities cluster around a few sites.
    let sites: Vec<(f64, f64)> = (0..3)
        .map(|_| (g.lat0 + r.random::<f64>() * (g.nlat - 1) as f64 * g.dlat, g.lon0 + r.random::<f64>() * (g.nlon - 1) as f64 * g.dlon))
        .collect();
    let place = |r: &mut rng::Rng| {
        let (la, lo) = sites[r.random_range(0..sites.len())];
        let lat = (la + 0.8 * g.dlat * normal(r)).clamp(g.lat0, g.lat0 + (g.nlat - 1) as f64 * g.dlat);
        let lon = (lo + 0.8 * g.dlon * normal(r)).clamp(g.lon0, g.lon0 + (g.nlon - 1) as f64 * g.dlon);
        ((lat * 1e4).round() / 1e4, (lon * 1e4).round() / 1e4)
    };
    let mut facilities = Vec::new();
    let n0 = (spec.initial_capacity_mw / spec.facility_mw).ceil().max(1.0) as usize;
    let unit0 = spec.initial_capacity_mw / n0 as f64;
    for k in 0..n0 {
        let (lat, lon) = place(&mut r);
        facilities.push(FacilityRecord {
            id: format!("F{k:05}"),
            sector: spec.sector,
            lat,
            lon,
            capacity_mw: unit0,
            start: spec.start,
            stop: None,
        });
    }
    let mut installed = spec.initial_capacity_mw;
    for (d, date) in dates.iter().enumerate() {
        while installed + spec.facility_mw <= spec.capacity_curve(d) + 1e-9 {
            let (lat, lon) = place(&mut r);
            facilities.push(FacilityRecord {
                id: format!("F{:05}", facilities.len()),
                sector: spec.sector,
                lat,
                lon,
                capacity_mw: spec.facility_mw,
                start: *date,
                stop: None,
            });
            installed += spec.facility_mw;
        }
    }

    // Weather: seasonal cycle, latitude gradient, AR(1) smooth anomalies, cell noise.
    let modes = smooth_modes(&g);
    let vars = spec.variables();
    let mut stacks = Vec::with_capacity(vars.len());
    for (v, name) in vars.iter().enumerate() {
        let amp = spec.amplitude(v);
        let base = 2.0 + 3.0 * amp;
        let phase = r.random::<f64>() * 60.0;
        let mut coef = vec![0.0; modes.len()];
        let mut values = Array3::<f32>::zeros((n, g.nlat, g.nlon));
        for (t, date) in dates.iter().enumerate() {
            for c in coef.iter_mut() {
                *c = 0.8 * *c + 0.35 * (0.5 + amp) * normal(&mut r);
            }
            let season = (2.0 * PI * (date.ordinal() as f64 - 172.0 - phase) / 365.25).cos();
            for i in 0..g.nlat {
                let lat_factor = 1.0 + 0.2 * (i as f64 / g.nlat.max(2) as f64 - 0.5);
                for j in 0..g.nlon {
                    let anomaly: f64 = coef.iter().zip(&modes).map(|(c, m)| c * m[[0, i, j]]).sum();
                    let x = base + amp * season * lat_factor + anomaly + 0.1 * normal(&mut r);
                    values[[t, i, j]] = x as f32;
                }
            }
        }
        stacks.push(GridStack::new(g, time, name, "", values)?);
    }

    // Target: installed capacity times a link of the capacity-weighted signal.
    let registry = gridstore::FacilityRegistry { sector: spec.sector, records: facilities.clone() };
    let betas: Vec<f64> = (0..vars.len()).map(|v| 1.0 / (v + 1) as f64).collect();
    let signal_scale: f64 = (0..vars.len()).map(|v| betas[v] * (2.0 + 3.0 * spec.amplitude(v))).sum();
    let mut capacity = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    let cells: Vec<(usize, usize, f64, String)> = facilities
        .iter()
        .map(|f| {
            let (i, j) = g.nearest_index(f.lat, f.lon);
            (i.clamp(0, g.nlat as i64 - 1) as usize, j.clamp(0, g.nlon as i64 - 1) as usize, f.capacity_mw, f.id.clone())
        })
        .collect();
    for (t, date) in dates.iter().enumerate() {
        let cap = registry.total_capacity_on(*date);
        let mut signal = 0.0;
        for (f, (i, j, mw, _)) in facilities.iter().zip(&cells) {
            if f.active_on(*date) {
                for (v, s) in stacks.iter().enumerate() {
                    signal += betas[v] * mw * s.values[[t, *i, *j]] as f64;
                }
            }
        }
        let cf = MEAN_CAPACITY_FACTOR * spec.link(signal / cap / signal_scale);
        let y0 = cap * cf;
        let y = (y0 + cap * MEAN_CAPACITY_FACTOR * spec.noise_sigma * normal(&mut r)).max(0.0);
        let season = (2.0 * PI * date.ordinal() as f64 / 365.25).cos();
        price.push(50.0 + 15.0 * season - 40.0 * (cf - MEAN_CAPACITY_FACTOR) + 5.0 * normal(&mut r));
        capacity.push(cap);
        clean.push(y0);
        power.push(y);
    }

    Ok(Generated {
        facilities,
        stacks,
        target: Series::new(time, "power_mw", "MW", power),
        price: Series::new(time, "price_eur_mwh", "EUR/MWh", price),
        truth: Truth {
            spec: spec.clone(),
            variables: vars.iter().map(|s| s.to_string()).collect(),
            betas,
            signal_scale,
            capacity_mw: capacity,
            clean_power_mw: clean,
        },
    })
}

/// Writes a synthetic dataset into `dir` (created if missing).
pub fn synth_generate(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<Truth> {
    let dir = dir.as_ref();
    let gen = generate(spec)?;
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir.join("weather")).map_err(io)?;
    for s in &gen.stacks {
        gridstore::write_gsf(s, dir.join("weather").join(format!("{}.gsf", s.var)))?;
    }
    gridstore::write_facilities_csv(&gen.facilities, dir.join("facilities.csv"))?;
    gridstore::write_series_csv(&gen.target, dir.join("target.csv"))?;
    gridstore::write_series_csv(&gen.price, dir.join("price.csv"))?;
    let truth = serde_json::to_string_pretty(&gen.truth).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("truth.json"), truth + "\n").map_err(io)?;
    Ok(gen.truth)
}

pub fn read_truth(dir: impl AsRef<Path>) -> Result<Truth> {
    let path = dir.as_ref().join("truth.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))
}
