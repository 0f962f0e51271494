//! Directory layout of a serialized view:
//!
//! ```text
//! manifest.json   kind, column names, split, trend models, PCA
//! X.csv           x_tab with a header row
//! y.csv           timestamp_utc,<target>
//! img_<c>.gsf     one stack per image channel (image view only)
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::{DatasetView, FeaturesError, Pca, Result, SplitSpec, TrendModel, ViewKind};
use crate::gridstore::{self, GridSpec, GridStack};

const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    kind: ViewKind,
    feature_names: Vec<String>,
    channel_names: Vec<String>,
    weather_columns: usize,
    target_name: String,
    target_unit: String,
    grid: Option<GridSpec>,
    split: Option<SplitSpec>,
    trends: Vec<TrendModel>,
    target_trend: Option<TrendModel>,
    pca: Option<Pca>,
}

fn io<E: std::fmt::Display>(e: E) -> FeaturesError {
    FeaturesError::Io(e.to_string())
}

pub fn write_view(view: &DatasetView, grid: Option<&GridSpec>, split: Option<&SplitSpec>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io)?;
    let manifest = Manifest {
        version: VERSION,
        kind: view.kind,
        feature_names: view.feature_names.clone(),
        channel_names: view.channel_names.clone(),
        weather_columns: view.weather_columns,
        target_name: view.y.name.clone(),
        target_unit: view.y.unit.clone(),
        grid: grid.copied(),
        split: split.copied(),
        trends: view.trends.clone(),
        target_trend: view.target_trend.clone(),
        pca: view.pca.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(io)?;
    fs::write(dir.join("manifest.json"), json + "\n").map_err(io)?;

    let mut x = view.feature_names.join(",");
    x.push('\n');
    for row in view.x_tab.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        x.push_str(&line.join(","));
        x.push('\n');
    }
    fs::write(dir.join("X.csv"), x).map_err(io)?;
    gridstore::write_series_csv(&view.y, dir.join("y.csv"))?;

    if let (Some(img), Some(grid)) = (&view.x_img, grid) {
        for (c, name) in view.channel_names.iter().enumerate() {
            let values = img.index_axis(Axis(1), c).to_owned();
            let stack = GridStack::new(*grid, view.y.time, name, "", values)?;
            gridstore::write_gsf(&stack, dir.join(format!("img_{c}.gsf")))?;
        }
    }
    Ok(())
}

pub fn read_view(dir: impl AsRef<Path>) -> Result<(DatasetView, Option<SplitSpec>)> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("manifest.json")).map_err(io)?;
    let m: Manifest = serde_json::from_str(&text).map_err(io)?;
    if m.version != VERSION {
        return Err(FeaturesError::Io(format!("unsupported view version {}", m.version)));
    }
    let mut y = gridstore::read_series_csv(dir.join("y.csv"), &m.target_name)?;
    y.unit = m.target_unit.clone();

    let xtext = fs::read_to_string(dir.join("X.csv")).map_err(io)?;
    let p = m.feature_names.len();
    let mut data = Vec::with_capacity(y.len() * p);
    for line in xtext.lines().skip(1).filter(|l| !l.is_empty()) {
        for cell in line.split(',') {
            data.push(cell.parse::<f64>().map_err(io)?);
        }
    }
    let x_tab = Array2::from_shape_vec((y.len(), p), data).map_err(io)?;

    let x_img = if m.kind == ViewKind::Image {
        let stacks = (0..m.channel_names.len())
            .map(|c| gridstore::read_gsf(dir.join(format!("img_{c}.gsf"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let (nt, nlat, nlon) = stacks[0].values.dim();
        Some(Array4::from_shape_fn((nt, stacks.len(), nlat, nlon), |(t, c, i, j)| stacks[c].values[[t, i, j]]))
    } else {
        None
    };
    let view = DatasetView {
        kind: m.kind,
        x_tab,
        x_img,
        y,
        feature_names: m.feature_names,
        channel_names: m.channel_names,
        weather_columns: m.weather_columns,
        trends: m.trends,
        target_trend: m.target_trend,
        pca: m.pca,
    };
    view.validate()?;
    Ok((view, m.split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_image_view, DetrendConfig};
    use crate::gridstore::{Series, TimeAxis};
    use chrono::NaiveDate;

    #[test]
    fn image_view_roundtrip() {
        let time = TimeAxis::daily(NaiveDate::from_ymd_opt(2018, 1, 1).unwrap(), 760);
        let grid = GridSpec::new(0.0, 1.0, 2, 0.0, 1.0, 2).unwrap();
        let mut st = GridStack::filled(grid, time, "w_ssrd", "", 0.25);
        st.values[[3, 1, 1]] = 0.125;
        let y = Series::new(time, "power_mw", "MW", (0..760).map(|t| t as f64 * 0.5 + 3.0).collect());
        let view = build_image_view(&[st], &[], &y).unwrap().detrended(&DetrendConfig::default(), 700).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let split = SplitSpec::default();
        write_view(&view, Some(&grid), Some(&split), dir.path()).unwrap();
        let (back, sp) = read_view(dir.path()).unwrap();
        assert_eq!(sp, Some(split));
        assert_eq!(back.x_img, view.x_img);
        assert_eq!(back.y.values, view.y.values);
        assert_eq!(back.target_trend, view.target_trend);
    }
}
