//! Pipeline stages and the end-to-end benchmark.
//!
//! Everything a run writes lives under `<out_dir>/<run_id>/`:
//!
//! ```text
//! manifest.json                 config hash, artifact list, failed runs
//! ingest/                       w_<var>.gsf, capacity.csv, mi_scores.csv
//! views/<view>/                 serialized dataset views
//! hpo/<run>.csv, <run>.json     tuning ledger and chosen hyperparameters
//! models/<run>/                 model.json + model.bin
//! predictions/<run>.csv         timestamp_utc,split,actual_mw,predicted_mw
//! metrics.csv                   train/test metric table
//! importance/<run>.csv          permutation importance (tabular runs)
//! occlusion/<run>.csv           occlusion map (image runs)
//! cv_bench/ledger_*.csv         estimated-vs-actual error ledgers
//! cv_bench/size_sweep.csv       dataset-size sweep
//! report/                       radar, size-sweep, timing and prediction charts
//! ```
//!
//! `<view>` is the approach name with `_detrended` appended when detrended;
//! `<run>` is `<view>__<model label>`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use gridcast_core::crossval::{
    self, dataset_size_sweep, run_delta_eps_experiment, DeltaEpsConfig, HpoAlgo, SchemeSummary, TrialLedger,
};
use gridcast_core::eval::{self, MetricRow};
use gridcast_core::features::{
    self, build_average_view, build_components_view, build_image_view, make_chronological_split, ChronoSplit, DatasetView, ViewKind,
};
use gridcast_core::gridstore::{self, GridSpec, GridStack, Series};
use gridcast_core::hpo::{self, HpSpace};
use gridcast_core::ingest::{self, Aggregation, DailyAggregate, FeatureColumn, MiScore, OffGrid};
use gridcast_core::models::{self, FittedModel, Hyperparameters, ModelSpec};
use gridcast_core::{par, rng};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelConfig};
use crate::{io_err, report, Error, Result};

/// Daily, capacity-weighted inputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: GridSpec,
    pub weighted: Vec<GridStack>,
    pub scalars: Vec<FeatureColumn>,
    pub target: Series,
    pub capacity_totals: Vec<f64>,
    pub mi: Vec<MiScore>,
    pub dropped_facilities: f64,
    pub rejected_facilities: usize,
}

fn weather_names(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    if !cfg.variables.is_empty() {
        return Ok(cfg.variables.clone());
    }
    let dir = cfg.data_dir.join("weather");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(io_err(&dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".gsf")).map(str::to_string))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::MissingArtifacts(format!("no .gsf stacks in {}", dir.display())));
    }
    Ok(names)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(path.display().to_string()))
    }
}

/// Reads the dataset directory, aggregates to days, weights by capacity
/// and assembles the scalar columns.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = &cfg.data_dir;
    for f in ["facilities.csv", "target.csv"] {
        require(&dir.join(f))?;
    }
    let target = gridstore::read_series_csv(dir.join("target.csv"), "power_mw")?.aggregate_to_daily(Aggregation::Mean)?;
    let mut stacks = Vec::new();
    for name in weather_names(cfg)? {
        let path = dir.join("weather").join(format!("{name}.gsf"));
        require(&path)?;
        let s = gridstore::read_gsf(&path)?;
        let how = Aggregation::for_variable(&s.var);
        stacks.push(s.aggregate_to_daily(how)?);
    }
    let time = stacks[0].time;
    let grid = stacks[0].spec;
    if target.time != time || stacks.iter().any(|s| s.time != time || s.spec != grid) {
        return Err(Error::Ingest(ingest::IngestError::AxisMismatch));
    }
    let loaded = ingest::load_facilities(dir.join("facilities.csv"), cfg.sector)?;
    let cap = ingest::assign_to_grid(&loaded.registry, &grid, &time, OffGrid::Reject)?;
    let w = ingest::compute_weights(&cap)?;
    let mut weighted: Vec<GridStack> = stacks.iter().map(|s| ingest::weight_weather(s, &w)).collect::<std::result::Result<_, _>>()?;

    let mut mi = Vec::new();
    if let Some(m) = &cfg.mi {
        let dates = time.dates();
        let train = dates.iter().take_while(|d| **d <= cfg.split.train_end).count().max(2);
        let avg = features::spatial_average(&weighted)?;
        let cut = |v: Vec<f64>, name: &str| Series::new(time, name, "", v[..train].to_vec());
        let cands: Vec<Series> = weighted.iter().enumerate().map(|(c, s)| cut(avg.column(c).to_vec(), &s.var)).collect();
        let y = cut(target.values.clone(), "power_mw");
        mi = ingest::select_variables_mi(&cands, &y, m.threshold, m.k, cfg.seed)?;
        if mi.iter().any(|s| s.selected) {
            let keep: Vec<bool> = mi.iter().map(|s| s.selected).collect();
            let mut k = keep.iter();
            weighted.retain(|_| *k.next().expect("same length"));
        }
    }

    let (lat, lon) = grid.center(grid.nlat / 2, grid.nlon / 2);
    let mut scalars = ingest::temporal_features(&time, lat, lon, cfg.sector);
    let price = dir.join("price.csv");
    if cfg.use_price && price.exists() {
        let mut p = ingest::read_price_csv(&price)?;
        p.series = p.series.aggregate_to_daily(Aggregation::Mean)?;
        if p.series.time != time {
            return Err(Error::Ingest(ingest::IngestError::AxisMismatch));
        }
        scalars.push(p);
    }
    Ok(Dataset {
        grid,
        weighted,
        scalars,
        target,
        capacity_totals: cap.totals(),
        mi,
        dropped_facilities: loaded.drop_fraction(),
        rejected_facilities: cap.rejected.len(),
    })
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(io_err(p))?;
    }
    let e = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(e)?;
    w.write_record(header).map_err(e)?;
    for r in rows {
        w.write_record(&r).map_err(e)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_ingest_artifacts(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for s in &ds.weighted {
        gridstore::write_gsf(s, dir.join(format!("{}.gsf", s.var)))?;
    }
    let ts = ds.target.time.dates();
    write_csv(
        &dir.join("capacity.csv"),
        &["date", "capacity_mw"],
        ts.iter().zip(&ds.capacity_totals).map(|(d, c)| vec![d.to_string(), c.to_string()]),
    )?;
    write_csv(
        &dir.join("mi_scores.csv"),
        &["variable", "mi_nats", "normalized", "selected"],
        ds.mi.iter().map(|m| vec![m.name.clone(), m.mi_nats.to_string(), m.normalized.to_string(), m.selected.to_string()]),
    )
}

#[derive(Debug, Clone)]
pub struct ViewEntry {
    pub approach: ViewKind,
    pub detrend: bool,
    pub view: DatasetView,
}

impl ViewEntry {
    pub fn name(&self) -> String {
        view_name(self.approach, self.detrend)
    }
}

pub fn view_name(approach: ViewKind, detrend: bool) -> String {
    if detrend {
        format!("{}_detrended", approach.as_str())
    } else {
        approach.as_str().to_string()
    }
}

pub fn split_for(cfg: &ExperimentConfig, view: &DatasetView) -> Result<ChronoSplit> {
    let split = make_chronological_split(&view.dates(), &cfg.split)?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidConfig("train, validation and test windows must all contain data".into()));
    }
    Ok(split)
}

/// Every configured approach × detrend flag.
pub fn build_views(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<ViewEntry>> {
    let dates = ds.target.time.dates();
    let split = make_chronological_split(&dates, &cfg.split)?;
    let n_train = split.train.len();
    let mut out = Vec::new();
    for &approach in &cfg.approaches {
        let base = match approach {
            ViewKind::Average => build_average_view(&ds.weighted, &ds.scalars, &ds.target)?,
            ViewKind::Components => build_components_view(&ds.weighted, &ds.scalars, &ds.target, cfg.max_components, n_train)?,
            ViewKind::Image => build_image_view(&ds.weighted, &ds.scalars, &ds.target)?,
        };
        for &detrend in &cfg.detrend {
            let view = if detrend { base.detrended(&cfg.detrend_config, n_train)? } else { base.clone() };
            out.push(ViewEntry { approach, detrend, view });
        }
    }
    Ok(out)
}

pub fn write_views(cfg: &ExperimentConfig, grid: &GridSpec, views: &[ViewEntry], dir: &Path) -> Result<()> {
    for v in views {
        features::write_view(&v.view, Some(grid), Some(&cfg.split), dir.join(v.name()))?;
    }
    Ok(())
}

/// Views from `run_dir/views` when all are present, rebuilt otherwise.
pub fn load_or_build_views(cfg: &ExperimentConfig, run_dir: &Path) -> Result<Vec<ViewEntry>> {
    let dir = run_dir.join("views");
    let mut out = Vec::new();
    for &approach in &cfg.approaches {
        for &detrend in &cfg.detrend {
            let p = dir.join(view_name(approach, detrend));
            if !p.join("manifest.json").exists() {
                return build_views(cfg, &load_dataset(cfg)?);
            }
            let (view, _) = features::read_view(&p)?;
            out.push(ViewEntry { approach, detrend, view });
        }
    }
    Ok(out)
}

fn label_seed(seed: u64, label: &str) -> u64 {
    let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    rng::derive(seed, h)
}

/// Search space for a model on a view, with `n_components` searched on
/// component views unless fixed.
pub fn space_for(mc: &ModelConfig, view: &DatasetView) -> HpSpace {
    let s = mc.space();
    if view.kind == ViewKind::Components && !mc.hyperparameters.contains_key("n_components") {
        s.with_components(view.weather_columns)
    } else {
        s
    }
}

/// One (approach, model, detrend) benchmark cell.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub ledger: TrialLedger,
    pub chosen: Hyperparameters,
    pub model: FittedModel,
    pub row: MetricRow,
    pub predictions: Vec<(NaiveDate, &'static str, f64, f64)>,
}

pub fn run_name(view: &ViewEntry, mc: &ModelConfig) -> String {
    format!("{}__{}", view.name(), mc.label())
}

/// Tunes on train/validation, returns the ledger and the lowest-ε̂ point.
pub fn tune(cfg: &ExperimentConfig, entry: &ViewEntry, mc: &ModelConfig, split: &ChronoSplit) -> Result<(TrialLedger, Hyperparameters)> {
    let seed = label_seed(cfg.seed, &mc.label());
    let dcfg = DeltaEpsConfig { scheme: cfg.tuning.scheme, hpo: cfg.tuning.hpo, n_trials: cfg.tuning.n_trials, seed };
    let ledger = run_delta_eps_experiment(&space_for(mc, &entry.view), &mc.base_spec(seed), &entry.view, &split.train, &split.val, &dcfg)?;
    let best = ledger.rows.iter().reduce(|a, b| if b.eps_hat < a.eps_hat { b } else { a }).expect("ledger is non-empty");
    let chosen = best.hyperparameters.clone();
    Ok((ledger, chosen))
}

pub fn final_spec(cfg: &ExperimentConfig, mc: &ModelConfig, chosen: &Hyperparameters) -> ModelSpec {
    let mut spec = hpo::spec_with(&mc.base_spec(0), chosen);
    spec.seed = label_seed(cfg.seed ^ 0x5eed, &mc.label());
    spec
}

fn predictions_of(model: &FittedModel, view: &DatasetView, split: &ChronoSplit) -> Result<Vec<(NaiveDate, &'static str, f64, f64)>> {
    let dates = view.dates();
    let mut out = Vec::new();
    for (label, rows) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let p = model.predict_original(view, rows)?;
        let y = view.original_target(rows);
        out.extend(rows.iter().zip(y).zip(p).map(|((&r, a), b)| (dates[r], label, a, b)));
    }
    Ok(out)
}

pub fn run_one(cfg: &ExperimentConfig, entry: &ViewEntry, mc: &ModelConfig) -> Result<RunResult> {
    let split = split_for(cfg, &entry.view)?;
    let (ledger, chosen) = tune(cfg, entry, mc, &split)?;
    let train_val = split.train_val();
    let model = models::fit(&final_spec(cfg, mc, &chosen), &entry.view, &train_val)?;
    let score = |rows: &[usize]| -> Result<eval::MetricSet> {
        let y = entry.view.original_target(rows);
        let p = model.predict_original(&entry.view, rows)?;
        Ok(eval::metrics_with(&y, &p, &cfg.metrics)?)
    };
    let row = MetricRow {
        approach: entry.approach.as_str().into(),
        model: mc.label(),
        detrend: entry.detrend,
        train: score(&train_val)?,
        test: score(&split.test)?,
    };
    let predictions = predictions_of(&model, &entry.view, &split)?;
    Ok(RunResult { name: run_name(entry, mc), ledger, chosen, model, row, predictions })
}

fn write_predictions(path: &Path, preds: &[(NaiveDate, &'static str, f64, f64)]) -> Result<()> {
    write_csv(
        path,
        &["timestamp_utc", "split", "actual_mw", "predicted_mw"],
        preds.iter().map(|(d, s, a, p)| vec![format!("{d}T00:00:00Z"), s.to_string(), a.to_string(), p.to_string()]),
    )
}

fn write_ledger(path: &Path, ledger: &TrialLedger) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(io_err(p))?;
    }
    let f = fs::File::create(path).map_err(io_err(path))?;
    ledger.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(io_err(p))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_attributions(cfg: &ExperimentConfig, entry: &ViewEntry, r: &RunResult, run_dir: &Path) -> Result<()> {
    let split = split_for(cfg, &entry.view)?;
    if entry.approach == ViewKind::Image {
        if let Some(oc) = &cfg.occlusion {
            let map = eval::occlusion_map(&r.model, &entry.view, split.test[0], oc)?;
            let rows = map.values.rows().into_iter().map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>();
            let header: Vec<String> = (0..map.values.ncols()).map(|j| format!("lon{j}")).collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&run_dir.join("occlusion").join(format!("{}.csv", r.name)), &header, rows)?;
        }
    } else if let Some(ic) = &cfg.importance {
        let imp = eval::permutation_importance(&r.model, &entry.view, &split.test, ic.metric, ic.n_repeats, cfg.seed)?;
        write_csv(
            &run_dir.join("importance").join(format!("{}.csv", r.name)),
            &["feature", "mean_increase", "std_increase"],
            imp.ranking().into_iter().map(|k| {
                let f = &imp.features[k];
                vec![f.name.clone(), f.mean.to_string(), f.std.to_string()]
            }),
        )?;
    }
    Ok(())
}

/// Scheme comparison outputs.
#[derive(Debug, Clone, Default)]
pub struct CvBenchOutcome {
    pub summaries: Vec<SchemeSummary>,
    pub sweeps: Vec<(String, String, Vec<crossval::SizeSweepRow>)>,
    pub failures: Vec<(String, String)>,
}

/// Runs the estimated-vs-actual comparison for every model × search
/// algorithm × scheme. All schemes of one model and algorithm share the
/// hyperparameter sequence.
pub fn run_cv_bench(cfg: &ExperimentConfig, views: &[ViewEntry], run_dir: &Path) -> Result<CvBenchOutcome> {
    let Some(cb) = &cfg.cv_bench else {
        return Ok(CvBenchOutcome::default());
    };
    let entry = views
        .iter()
        .find(|v| v.approach == cb.approach && !v.detrend)
        .or_else(|| views.iter().find(|v| v.approach == cb.approach))
        .ok_or_else(|| Error::InvalidConfig(format!("cv_bench approach {} is not configured", cb.approach.as_str())))?;
    let split = split_for(cfg, &entry.view)?;
    let dir = run_dir.join("cv_bench");
    let mut jobs: Vec<(&ModelConfig, HpoAlgo, crossval::SchemeParams)> = Vec::new();
    for mc in cfg.models.iter().filter(|m| m.family.accepts(cb.approach)) {
        for &h in &cb.hpo {
            for &s in &cb.schemes {
                jobs.push((mc, h, s));
            }
        }
    }
    let results = par::map_slice(&jobs, |(mc, h, s)| {
        let seed = label_seed(cfg.seed, &format!("{}/{}", mc.label(), h.as_str()));
        let dcfg = DeltaEpsConfig { scheme: *s, hpo: *h, n_trials: cb.n_trials, seed };
        run_delta_eps_experiment(&space_for(mc, &entry.view), &mc.base_spec(seed), &entry.view, &split.train, &split.val, &dcfg)
    });
    let mut out = CvBenchOutcome::default();
    for ((mc, h, s), res) in jobs.iter().zip(results) {
        let tag = format!("{}_{}_{}", mc.label(), h.as_str(), s.label());
        match res {
            Ok(mut ledger) => {
                for r in &mut ledger.rows {
                    r.model = mc.label();
                }
                write_ledger(&dir.join(format!("ledger_{tag}.csv")), &ledger)?;
                out.summaries.push(SchemeSummary {
                    scheme: s.label(),
                    model: mc.label(),
                    hpo: h.as_str().into(),
                    summary: ledger.summary().expect("non-empty"),
                });
            }
            Err(e) => out.failures.push((format!("cv_bench/{tag}"), e.to_string())),
        }
    }
    if !cb.sizes.is_empty() {
        let scheme = cb.size_scheme.unwrap_or(cb.schemes[0]);
        let h = cb.hpo[0];
        let models: Vec<&ModelConfig> = cfg.models.iter().filter(|m| m.family.accepts(cb.approach)).collect();
        let sweeps = par::map_slice(&models, |mc| {
            let seed = label_seed(cfg.seed, &format!("{}/{}", mc.label(), h.as_str()));
            let dcfg = DeltaEpsConfig { scheme, hpo: h, n_trials: cb.n_trials, seed };
            dataset_size_sweep(&space_for(mc, &entry.view), &mc.base_spec(seed), &entry.view, &split.train, &split.val, &cb.sizes, &dcfg)
        });
        for (mc, res) in models.iter().zip(sweeps) {
            match res {
                Ok(rows) => out.sweeps.push((mc.label(), scheme.label(), rows)),
                Err(e) => out.failures.push((format!("cv_bench/size_sweep_{}", mc.label()), e.to_string())),
            }
        }
        let mut buf = Vec::new();
        for (k, (m, s, rows)) in out.sweeps.iter().enumerate() {
            let mut part = Vec::new();
            crossval::write_size_sweep_csv(m, s, rows, &mut part)?;
            let text = String::from_utf8(part).expect("utf8");
            let skip = if k == 0 { 0 } else { text.find('\n').map_or(0, |i| i + 1) };
            buf.extend_from_slice(&text.as_bytes()[skip..]);
        }
        if !out.sweeps.is_empty() {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            fs::write(dir.join("size_sweep.csv"), buf).map_err(io_err(&dir))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config_hash: String,
    pub command: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub failures: Vec<(String, String)>,
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).map_err(io_err(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else if let Ok(rel) = p.strip_prefix(root) {
            let rel = rel.to_string_lossy().replace('\\', "/");
            if rel != "manifest.json" {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Writes `manifest.json` listing everything under the run directory.
pub fn write_manifest(cfg: &ExperimentConfig, run_dir: &Path, command: &str, failures: &[(String, String)]) -> Result<Manifest> {
    write_json(&run_dir.join("config.json"), cfg)?;
    let mut artifacts = Vec::new();
    list_files(run_dir, run_dir, &mut artifacts)?;
    let m = Manifest {
        run_id: cfg.run_id(),
        config_hash: cfg.hash(),
        command: command.into(),
        seed: cfg.seed,
        artifacts,
        failures: failures.to_vec(),
    };
    write_json(&run_dir.join("manifest.json"), &m)?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub run_dir: PathBuf,
    pub rows: Vec<MetricRow>,
    pub runs: Vec<RunResult>,
    pub cv: CvBenchOutcome,
    pub failures: Vec<(String, String)>,
}

/// Tunes, refits and scores every (approach, model, detrend) cell, runs the
/// optional scheme comparison and renders the report. Failed cells are
/// recorded and skipped.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let ds = load_dataset(cfg)?;
    write_ingest_artifacts(&ds, &run_dir.join("ingest"))?;
    let views = build_views(cfg, &ds)?;
    write_views(cfg, &ds.grid, &views, &run_dir.join("views"))?;

    let jobs: Vec<(&ViewEntry, &ModelConfig)> =
        views.iter().flat_map(|v| cfg.models.iter().filter(|m| m.family.accepts(v.approach)).map(move |m| (v, m))).collect();
    let results = par::map_slice(&jobs, |(v, m)| run_one(cfg, v, m));

    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for ((v, m), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => {
                write_ledger(&run_dir.join("hpo").join(format!("{}.csv", r.name)), &r.ledger)?;
                write_json(&run_dir.join("hpo").join(format!("{}.json", r.name)), &r.chosen)?;
                models::save_model(&r.model, run_dir.join("models").join(&r.name))?;
                write_predictions(&run_dir.join("predictions").join(format!("{}.csv", r.name)), &r.predictions)?;
                if let Err(e) = write_attributions(cfg, v, &r, &run_dir) {
                    failures.push((format!("{}/attribution", r.name), e.to_string()));
                }
                runs.push(r);
            }
            Err(e) => failures.push((run_name(v, m), e.to_string())),
        }
    }
    let rows: Vec<MetricRow> = runs.iter().map(|r| r.row.clone()).collect();
    let f = fs::File::create(run_dir.join("metrics.csv")).map_err(io_err(&run_dir))?;
    eval::write_metric_table(&rows, std::io::BufWriter::new(f))?;

    let cv = run_cv_bench(cfg, &views, &run_dir)?;
    failures.extend(cv.failures.iter().cloned());
    if !failures.is_empty() {
        write_csv(&run_dir.join("failures.csv"), &["run", "error"], failures.iter().map(|(a, b)| vec![a.clone(), b.clone()]))?;
    }
    report::render(&run_dir)?;
    write_manifest(cfg, &run_dir, "benchmark", &failures)?;
    Ok(BenchmarkOutcome { run_dir, rows, runs, cv, failures })
}

/// `hpo` stage: tuning ledgers and chosen points only.
pub fn run_hpo_stage(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let run_dir = cfg.run_dir();
    let views = load_or_build_views(cfg, &run_dir)?;
    let jobs: Vec<(&ViewEntry, &ModelConfig)> =
        views.iter().flat_map(|v| cfg.models.iter().filter(|m| m.family.accepts(v.approach)).map(move |m| (v, m))).collect();
    let results = par::map_slice(&jobs, |(v, m)| split_for(cfg, &v.view).and_then(|s| tune(cfg, v, m, &s)));
    let mut failures = Vec::new();
    for ((v, m), res) in jobs.iter().zip(results) {
        let name = run_name(v, m);
        match res {
            Ok((ledger, chosen)) => {
                write_ledger(&run_dir.join("hpo").join(format!("{name}.csv")), &ledger)?;
                write_json(&run_dir.join("hpo").join(format!("{name}.json")), &chosen)?;
            }
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    Ok(failures)
}

/// `train` stage: fits on train+validation with the tuned point when
/// `hpo/<run>.json` exists, the configured values otherwise.
pub fn run_train_stage(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let run_dir = cfg.run_dir();
    let views = load_or_build_views(cfg, &run_dir)?;
    let mut failures = Vec::new();
    for v in &views {
        for m in cfg.models.iter().filter(|m| m.family.accepts(v.approach)) {
            let name = run_name(v, m);
            let res = (|| -> Result<()> {
                let hp_path = run_dir.join("hpo").join(format!("{name}.json"));
                let chosen: Hyperparameters = if hp_path.exists() {
                    let text = fs::read_to_string(&hp_path).map_err(io_err(&hp_path))?;
                    serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?
                } else {
                    Hyperparameters::new()
                };
                let split = split_for(cfg, &v.view)?;
                let model = models::fit(&final_spec(cfg, m, &chosen), &v.view, &split.train_val())?;
                models::save_model(&model, run_dir.join("models").join(&name))?;
                Ok(())
            })();
            if let Err(e) = res {
                failures.push((name, e.to_string()));
            }
        }
    }
    Ok(failures)
}

/// `predict` stage: predictions from saved models.
pub fn run_predict_stage(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let run_dir = cfg.run_dir();
    let views = load_or_build_views(cfg, &run_dir)?;
    let mut failures = Vec::new();
    for v in &views {
        for m in cfg.models.iter().filter(|m| m.family.accepts(v.approach)) {
            let name = run_name(v, m);
            let res = (|| -> Result<()> {
                let dir = run_dir.join("models").join(&name);
                require(&dir.join("model.json"))?;
                let model = models::load_model(&dir)?;
                let split = split_for(cfg, &v.view)?;
                write_predictions(&run_dir.join("predictions").join(format!("{name}.csv")), &predictions_of(&model, &v.view, &split)?)
            })();
            if let Err(e) = res {
                failures.push((name, e.to_string()));
            }
        }
    }
    Ok(failures)
}
