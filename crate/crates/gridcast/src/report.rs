//! Tables and charts rendered from the artifacts of a run directory.
//!
//! Writes into `<run_dir>/report/`:
//! `radar.csv`/`radar.svg` (mean Δε, σ, Δε at the selected point and seconds
//! per iteration for each scheme), `timing.csv` (one row per scheme × model
//! × search algorithm), `size_sweep.svg`, `pred_<run>.svg` and
//! `occlusion_<run>.svg`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use crate::svg::{Scale, Svg, PALETTE};
use crate::{io_err, Error, Result};

#[derive(Debug, Clone, Deserialize)]
struct LedgerRecord {
    scheme: String,
    hpo: String,
    model: String,
    eps_hat_mw: f64,
    delta_mw: f64,
    seconds: f64,
    n_fits: usize,
}

/// Aggregates of one ledger file.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeStats {
    pub scheme: String,
    pub model: String,
    pub hpo: String,
    pub n_trials: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub delta_min: f64,
    pub seconds_per_trial: f64,
    pub seconds_per_iter: f64,
    pub mean_fits: f64,
}

fn stats_of(recs: &[LedgerRecord]) -> Option<SchemeStats> {
    let first = recs.first()?;
    let n = recs.len() as f64;
    let mean = recs.iter().map(|r| r.delta_mw).sum::<f64>() / n;
    let var = if recs.len() > 1 { recs.iter().map(|r| (r.delta_mw - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let best = recs.iter().reduce(|a, b| if b.eps_hat_mw < a.eps_hat_mw { b } else { a })?;
    let secs: f64 = recs.iter().map(|r| r.seconds).sum();
    let fits: usize = recs.iter().map(|r| r.n_fits).sum();
    Some(SchemeStats {
        scheme: first.scheme.clone(),
        model: first.model.clone(),
        hpo: first.hpo.clone(),
        n_trials: recs.len(),
        mean_delta: mean,
        std_delta: var.sqrt(),
        delta_min: best.delta_mw,
        seconds_per_trial: secs / n,
        seconds_per_iter: if fits > 0 { secs / fits as f64 } else { 0.0 },
        mean_fits: fits as f64 / n,
    })
}

fn sorted_files(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(vec![]);
    }
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with(prefix) && name.ends_with(ext)
        })
        .collect();
    v.sort();
    Ok(v)
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let e = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(e)?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(e)
}

/// Per-ledger statistics for every `cv_bench/ledger_*.csv`.
pub fn scheme_stats(run_dir: &Path) -> Result<Vec<SchemeStats>> {
    let mut out = Vec::new();
    for p in sorted_files(&run_dir.join("cv_bench"), "ledger_", ".csv")? {
        if let Some(s) = stats_of(&read_records::<LedgerRecord>(&p)?) {
            out.push(s);
        }
    }
    Ok(out)
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let e = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(e)?;
    w.write_record(header).map_err(e)?;
    for r in rows {
        w.write_record(r).map_err(e)?;
    }
    w.flush().map_err(io_err(path))
}

const RADAR_AXES: [&str; 4] = ["|mean Δε|", "σ(Δε)", "|Δε_min|", "s / iteration"];

fn radar_values(s: &SchemeStats) -> [f64; 4] {
    [s.mean_delta.abs(), s.std_delta, s.delta_min.abs(), s.seconds_per_iter]
}

/// One panel per model and search algorithm, one polygon per scheme; each
/// axis is scaled by its largest value in the panel.
fn radar_svg(stats: &[SchemeStats]) -> String {
    let mut panels: BTreeMap<(String, String), Vec<&SchemeStats>> = BTreeMap::new();
    for s in stats {
        panels.entry((s.model.clone(), s.hpo.clone())).or_default().push(s);
    }
    let size = 360.0;
    let mut svg = Svg::new(size * panels.len().max(1) as f64, size + 40.0);
    for (p, ((model, hpo), group)) in panels.iter().enumerate() {
        let cx = size * p as f64 + size / 2.0 - 40.0;
        let cy = size / 2.0 + 20.0;
        let r = 110.0;
        let angle = |k: usize| -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / RADAR_AXES.len() as f64;
        let at = |k: usize, f: f64| (cx + r * f * angle(k).cos(), cy + r * f * angle(k).sin());
        svg.text((cx, 18.0), 13.0, "middle", &format!("{model} ({hpo})"));
        for ring in [0.25, 0.5, 0.75, 1.0] {
            let pts: Vec<_> = (0..RADAR_AXES.len()).map(|k| at(k, ring)).collect();
            svg.path(&pts, "#cccccc", 0.8, true, None);
        }
        for (k, name) in RADAR_AXES.iter().enumerate() {
            svg.line((cx, cy), at(k, 1.0), "#999999", 0.8);
            let (x, y) = at(k, 1.18);
            svg.text((x, y + 4.0), 10.0, "middle", name);
        }
        let maxes: Vec<f64> = (0..RADAR_AXES.len())
            .map(|k| group.iter().map(|s| radar_values(s)[k]).fold(0.0, f64::max))
            .collect();
        for (g, s) in group.iter().enumerate() {
            let v = radar_values(s);
            let pts: Vec<_> =
                (0..RADAR_AXES.len()).map(|k| at(k, if maxes[k] > 0.0 { v[k] / maxes[k] } else { 0.0 })).collect();
            let c = PALETTE[g % PALETTE.len()];
            svg.path(&pts, c, 1.6, true, Some(c));
        }
        let labels: Vec<String> = group.iter().map(|s| s.scheme.clone()).collect();
        svg.legend((cx + r + 40.0, 60.0), &labels);
    }
    svg.finish()
}

struct Series2 {
    label: String,
    points: Vec<(f64, f64)>,
    band: Option<Vec<(f64, f64)>>,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

/// Line chart with light error bands and a legend.
fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series2], x_ticks: &[(f64, String)], shade: Option<(f64, f64)>) -> String {
    let (w, h) = (820.0, 420.0);
    let plot = Axes { x0: 70.0, x1: w - 170.0, y0: h - 50.0, y1: 40.0 };
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = series.iter().flat_map(|s| {
        let band = s.band.iter().flatten().flat_map(|b| [b.0, b.1]);
        s.points.iter().map(|p| p.1).chain(band)
    });
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (xmin, xmax) = if xmin.is_finite() { (xmin, xmax) } else { (0.0, 1.0) };
    let (ymin, ymax) = if ymin.is_finite() { (ymin, ymax) } else { (0.0, 1.0) };
    let pad = 0.05 * (ymax - ymin).max(1e-9);
    let sx = Scale::new(xmin, xmax, plot.x0, plot.x1);
    let sy = Scale::new(ymin - pad, ymax + pad, plot.y0, plot.y1);

    let mut svg = Svg::new(w, h);
    if let Some((a, b)) = shade {
        svg.rect(sx.map(a), plot.y1, sx.map(b) - sx.map(a), plot.y0 - plot.y1, "#f0f0f0");
    }
    svg.text((w / 2.0, 22.0), 14.0, "middle", title);
    svg.line((plot.x0, plot.y0), (plot.x1, plot.y0), "#000000", 1.0);
    svg.line((plot.x0, plot.y0), (plot.x0, plot.y1), "#000000", 1.0);
    for k in 0..=4 {
        let v = sy.d0 + (sy.d1 - sy.d0) * k as f64 / 4.0;
        let y = sy.map(v);
        svg.line((plot.x0 - 4.0, y), (plot.x0, y), "#000000", 1.0);
        svg.text((plot.x0 - 6.0, y + 4.0), 10.0, "end", &format!("{v:.3}"));
    }
    for (v, label) in x_ticks {
        let x = sx.map(*v);
        svg.line((x, plot.y0), (x, plot.y0 + 4.0), "#000000", 1.0);
        svg.text((x, plot.y0 + 16.0), 10.0, "middle", label);
    }
    svg.text(((plot.x0 + plot.x1) / 2.0, h - 10.0), 12.0, "middle", x_label);
    svg.text((14.0, (plot.y0 + plot.y1) / 2.0), 12.0, "start", y_label);
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        if let Some(band) = &s.band {
            for (p, (lo, hi)) in s.points.iter().zip(band) {
                svg.line((sx.map(p.0), sy.map(*lo)), (sx.map(p.0), sy.map(*hi)), c, 1.0);
            }
        }
        let pts: Vec<_> = s.points.iter().map(|p| (sx.map(p.0), sy.map(p.1))).collect();
        svg.path(&pts, c, 1.3, false, None);
        if s.points.len() <= 40 {
            for p in &pts {
                svg.circle(*p, 2.5, c);
            }
        }
    }
    let labels: Vec<String> = series.iter().map(|s| s.label.clone()).collect();
    svg.legend((plot.x1 + 16.0, plot.y1 + 10.0), &labels);
    svg.finish()
}

#[derive(Debug, Deserialize)]
struct SweepRecord {
    model: String,
    scheme: String,
    size_days: usize,
    mean_abs_delta_mw: f64,
    std_abs_delta_mw: f64,
}

fn size_sweep_svg(recs: &[SweepRecord]) -> String {
    let mut groups: BTreeMap<(String, String), Vec<&SweepRecord>> = BTreeMap::new();
    for r in recs {
        groups.entry((r.model.clone(), r.scheme.clone())).or_default().push(r);
    }
    let series: Vec<Series2> = groups
        .iter()
        .map(|((m, s), rs)| Series2 {
            label: format!("{m} / {s}"),
            points: rs.iter().map(|r| (r.size_days as f64, r.mean_abs_delta_mw)).collect(),
            band: Some(rs.iter().map(|r| (r.mean_abs_delta_mw - r.std_abs_delta_mw, r.mean_abs_delta_mw + r.std_abs_delta_mw)).collect()),
        })
        .collect();
    let mut sizes: Vec<usize> = recs.iter().map(|r| r.size_days).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let ticks: Vec<(f64, String)> = sizes.iter().map(|&s| (s as f64, s.to_string())).collect();
    line_chart("Mean |Δε| by training-window size", "training days", "|Δε| (MW)", &series, &ticks, None)
}

#[derive(Debug, Deserialize)]
struct PredRecord {
    timestamp_utc: String,
    split: String,
    actual_mw: f64,
    predicted_mw: f64,
}

fn parse_day(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d").ok()
}

fn prediction_svg(name: &str, recs: &[PredRecord]) -> String {
    let Some(first) = recs.first().and_then(|r| parse_day(&r.timestamp_utc)) else {
        return line_chart(name, "date", "MW", &[], &[], None);
    };
    let day = |r: &PredRecord| parse_day(&r.timestamp_utc).map_or(0.0, |d| (d - first).num_days() as f64);
    let actual = Series2 { label: "actual".into(), points: recs.iter().map(|r| (day(r), r.actual_mw)).collect(), band: None };
    let pred = Series2 { label: "predicted".into(), points: recs.iter().map(|r| (day(r), r.predicted_mw)).collect(), band: None };
    let test: Vec<f64> = recs.iter().filter(|r| r.split == "test").map(day).collect();
    let shade = test.first().zip(test.last()).map(|(a, b)| (*a, *b));
    let last = recs.last().map(day).unwrap_or(0.0);
    let ticks: Vec<(f64, String)> = (0..=4)
        .map(|k| {
            let d = (last * k as f64 / 4.0).round();
            (d, (first + chrono::Days::new(d as u64)).to_string())
        })
        .collect();
    line_chart(&format!("{name} (test window shaded)"), "date", "power (MW)", &[actual, pred], &ticks, shade)
}

fn heatmap_svg(name: &str, values: &[Vec<f64>]) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let cell = 28.0;
    let mut svg = Svg::new(cols as f64 * cell + 120.0, rows as f64 * cell + 60.0);
    svg.text((10.0, 20.0), 13.0, "start", &format!("{name}: occlusion sensitivity (MW)"));
    let max = values.iter().flatten().cloned().fold(0.0, f64::max);
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let f = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let shade = (255.0 * (1.0 - f)).round() as u8;
            let fill = format!("#ff{shade:02x}{shade:02x}");
            // Northernmost row on top.
            let y = 35.0 + (rows - 1 - i) as f64 * cell;
            svg.rect(10.0 + j as f64 * cell, y, cell - 1.0, cell - 1.0, &fill);
        }
    }
    svg.text((cols as f64 * cell + 20.0, 50.0), 10.0, "start", &format!("max {max:.3}"));
    svg.finish()
}

fn stem<'a>(p: &'a Path, prefix: &str) -> &'a str {
    let s = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    s.strip_prefix(prefix).unwrap_or(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Renders every chart whose inputs exist and returns the written paths.
/// Fails with `MissingArtifacts` when the directory holds nothing to report.
pub fn render(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let out = run_dir.join("report");
    let stats = scheme_stats(run_dir)?;
    let sweep_path = run_dir.join("cv_bench").join("size_sweep.csv");
    let preds = sorted_files(&run_dir.join("predictions"), "", ".csv")?;
    let occl = sorted_files(&run_dir.join("occlusion"), "", ".csv")?;
    if stats.is_empty() && !sweep_path.exists() && preds.is_empty() && occl.is_empty() {
        return Err(Error::MissingArtifacts(format!("nothing to report in {}", run_dir.display())));
    }
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mut written = Vec::new();

    if !stats.is_empty() {
        let radar: Vec<Vec<String>> = stats
            .iter()
            .map(|s| {
                vec![
                    s.scheme.clone(),
                    s.model.clone(),
                    s.hpo.clone(),
                    s.mean_delta.to_string(),
                    s.std_delta.to_string(),
                    s.delta_min.to_string(),
                    s.seconds_per_iter.to_string(),
                ]
            })
            .collect();
        let p = out.join("radar.csv");
        write_table(&p, &["scheme", "model", "hpo", "mean_delta_mw", "std_delta_mw", "delta_min_mw", "seconds_per_iter"], &radar)?;
        written.push(p);
        let p = out.join("radar.svg");
        write_text(&p, &radar_svg(&stats))?;
        written.push(p);

        let mut sorted = stats.clone();
        sorted.sort_by(|a, b| (&a.scheme, &a.model, &a.hpo).cmp(&(&b.scheme, &b.model, &b.hpo)));
        let timing: Vec<Vec<String>> = sorted
            .iter()
            .map(|s| {
                vec![
                    s.scheme.clone(),
                    s.model.clone(),
                    s.hpo.clone(),
                    s.n_trials.to_string(),
                    s.mean_fits.to_string(),
                    s.seconds_per_trial.to_string(),
                    s.seconds_per_iter.to_string(),
                ]
            })
            .collect();
        let p = out.join("timing.csv");
        write_table(&p, &["scheme", "model", "hpo", "n_trials", "fits_per_trial", "seconds_per_trial", "seconds_per_iter"], &timing)?;
        written.push(p);
    }
    if sweep_path.exists() {
        let recs: Vec<SweepRecord> = read_records(&sweep_path)?;
        let p = out.join("size_sweep.svg");
        write_text(&p, &size_sweep_svg(&recs))?;
        written.push(p);
    }
    for f in preds {
        let name = stem(&f, "");
        let recs: Vec<PredRecord> = read_records(&f)?;
        let p = out.join(format!("pred_{name}.svg"));
        write_text(&p, &prediction_svg(name, &recs))?;
        written.push(p);
    }
    for f in occl {
        let name = stem(&f, "");
        let e = |e: csv::Error| Error::Io(format!("{}: {e}", f.display()));
        let mut r = csv::Reader::from_path(&f).map_err(e)?;
        let values: Vec<Vec<f64>> = r
            .records()
            .map(|rec| rec.map_err(e).map(|rec| rec.iter().map(|v| v.parse().unwrap_or(0.0)).collect()))
            .collect::<Result<_>>()?;
        let p = out.join(format!("occlusion_{name}.svg"));
        write_text(&p, &heatmap_svg(name, &values))?;
        written.push(p);
    }
    Ok(written)
}
