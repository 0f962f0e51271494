//! Cross-validation schemes, generalization-error estimates, the
//! estimated-vs-actual error experiment and dataset-size sweeps.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval;
use crate::features::DatasetView;
use crate::hpo::{self, BayesConfig, HpSpace, HpoError};
use crate::models::{self, Hyperparameters, ModelError, ModelSpec};
use crate::rng;

#[derive(Debug, Error)]
pub enum CrossvalError {
    #[error("{scheme} needs at least {needed} samples, got {n}")]
    TooFewSamples { scheme: &'static str, n: usize, needed: usize },
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("iteration {iteration}: {source}")]
    Fit { iteration: usize, source: ModelError },
    #[error("scoring: {0}")]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Hpo(#[from] HpoError),
    #[error("validation window must follow the training window")]
    WindowOrder,
    #[error("size {size} exceeds the {window}-row training window")]
    SizeExceedsWindow { size: usize, window: usize },
    #[error("sizes must be strictly ascending and positive")]
    UnsortedSizes,
    #[error("every trial failed; first error: {0}")]
    AllTrialsFailed(String),
    #[error("writing csv: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CrossvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Holdout,
    Kfold,
    Expanding,
    Sliding,
    Blocking,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Holdout, Scheme::Kfold, Scheme::Expanding, Scheme::Sliding, Scheme::Blocking];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Holdout => "holdout",
            Scheme::Kfold => "kfold",
            Scheme::Expanding => "expanding",
            Scheme::Sliding => "sliding",
            Scheme::Blocking => "blocking",
        }
    }

    /// Test indices always follow train indices.
    pub fn preserves_order(&self) -> bool {
        matches!(self, Scheme::Expanding | Scheme::Sliding)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeParams {
    pub scheme: Scheme,
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default = "default_k", rename = "k")]
    pub k: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// Test share for holdout and blocking.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Holdout test length in rows; overrides `test_fraction`.
    #[serde(default)]
    pub test_rows: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_k() -> usize {
    10
}
fn default_block_len() -> usize {
    7
}
fn default_test_fraction() -> f64 {
    0.1
}

impl SchemeParams {
    pub fn new(scheme: Scheme) -> Self {
        SchemeParams {
            scheme,
            shuffle: false,
            k: default_k(),
            block_len: default_block_len(),
            test_fraction: default_test_fraction(),
            test_rows: None,
            rng_seed: 0,
        }
    }

    pub fn shuffled(mut self) -> Self {
        self.shuffle = true;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// `kfold_shuffled`, `expanding`, ...
    pub fn label(&self) -> String {
        if self.shuffle {
            format!("{}_shuffled", self.scheme.as_str())
        } else {
            self.scheme.as_str().to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CrossvalError::InvalidParams(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.block_len == 0 {
            return bad("block_len must be at least 1".into());
        }
        if self.shuffle && !matches!(self.scheme, Scheme::Holdout | Scheme::Kfold) {
            return bad(format!("{} cannot be shuffled", self.scheme.as_str()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.test_rows == Some(0) {
            return bad("test_rows must be positive".into());
        }
        Ok(())
    }
}

/// Ordered `(train, test)` index pairs; each list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub iterations: Vec<(Vec<usize>, Vec<usize>)>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Maps every index through `rows` (plan over a window to view rows).
    pub fn remap(&self, rows: &[usize]) -> SplitPlan {
        let m = |v: &Vec<usize>| v.iter().map(|&i| rows[i]).collect();
        SplitPlan { iterations: self.iterations.iter().map(|(a, b)| (m(a), m(b))).collect() }
    }
}

fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|i| (i * n / k, (i + 1) * n / k)).collect()
}

pub fn make_splits(n: usize, params: &SchemeParams) -> Result<SplitPlan> {
    params.validate()?;
    let p = params;
    let scheme = p.scheme.as_str();
    let mut r = rng::seeded(p.rng_seed);
    let iterations = match p.scheme {
        Scheme::Holdout => {
            if n < 2 {
                return Err(CrossvalError::TooFewSamples { scheme, n, needed: 2 });
            }
            let n_test = p.test_rows.unwrap_or_else(|| (p.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let mut idx: Vec<usize> = (0..n).collect();
            if p.shuffle {
                idx.shuffle(&mut r);
            }
            let mut test = idx.split_off(n - n_test);
            idx.sort_unstable();
            test.sort_unstable();
            vec![(idx, test)]
        }
        Scheme::Kfold | Scheme::Expanding | Scheme::Sliding => {
            if n < 2 * p.k {
                return Err(CrossvalError::TooFewSamples { scheme, n, needed: 2 * p.k });
            }
            let mut order: Vec<usize> = (0..n).collect();
            if p.shuffle {
                order.shuffle(&mut r);
            }
            let folds: Vec<Vec<usize>> = fold_bounds(n, p.k)
                .into_iter()
                .map(|(a, b)| {
                    let mut f = order[a..b].to_vec();
                    f.sort_unstable();
                    f
                })
                .collect();
            match p.scheme {
                Scheme::Kfold => (0..p.k)
                    .map(|i| {
                        let mut train: Vec<usize> = folds.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, f)| f.iter().copied()).collect();
                        train.sort_unstable();
                        (train, folds[i].clone())
                    })
                    .collect(),
                Scheme::Expanding => (1..p.k).map(|i| (folds[..i].concat(), folds[i].clone())).collect(),
                _ => (1..p.k).map(|i| (folds[i - 1].clone(), folds[i].clone())).collect(),
            }
        }
        Scheme::Blocking => {
            let n_blocks = n.div_ceil(p.block_len);
            if n_blocks < 2 {
                return Err(CrossvalError::TooFewSamples { scheme, n, needed: p.block_len + 1 });
            }
            let n_test = ((p.test_fraction * n_blocks as f64).round() as usize).clamp(1, n_blocks - 1);
            let mut blocks: Vec<usize> = (0..n_blocks).collect();
            blocks.shuffle(&mut r);
            let mut is_test = vec![false; n_blocks];
            for &b in &blocks[..n_test] {
                is_test[b] = true;
            }
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_test[i / p.block_len]);
            vec![(train, test)]
        }
    };
    Ok(SplitPlan { iterations })
}

/// Mean test RMSE over a plan, in original target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub eps_hat: f64,
    pub per_iteration: Vec<f64>,
    pub n_fits: usize,
}

/// Fits on each iteration's train rows and scores RMSE on its test rows.
/// Plan indices are view rows.
pub fn estimate_generalization_error(spec: &ModelSpec, view: &DatasetView, plan: &SplitPlan) -> Result<CvEstimate> {
    let mut per_iteration = Vec::with_capacity(plan.len());
    for (i, (train, test)) in plan.iterations.iter().enumerate() {
        let wrap = |source| CrossvalError::Fit { iteration: i, source };
        let m = models::fit(spec, view, train).map_err(wrap)?;
        let pred = m.predict_original(view, test).map_err(wrap)?;
        per_iteration.push(rmse_any(&view.original_target(test), &pred));
    }
    let eps_hat = per_iteration.iter().sum::<f64>() / per_iteration.len().max(1) as f64;
    Ok(CvEstimate { eps_hat, n_fits: per_iteration.len(), per_iteration })
}

/// RMSE that also accepts a single row.
fn rmse_any(y: &[f64], p: &[f64]) -> f64 {
    (y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase", deny_unknown_fields)]
pub enum HpoAlgo {
    Random,
    Bayesian {
        #[serde(flatten)]
        config: BayesConfig,
    },
}

impl HpoAlgo {
    pub fn as_str(&self) -> &'static str {
        match self {
            HpoAlgo::Random => "random",
            HpoAlgo::Bayesian { .. } => "bayesian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEpsConfig {
    pub scheme: SchemeParams,
    pub hpo: HpoAlgo,
    pub n_trials: usize,
    /// Drives the hyperparameter sequence and per-trial model seeds.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: usize,
    pub scheme: String,
    pub hpo: String,
    pub model: String,
    pub eps_hat: f64,
    pub eps: f64,
    pub delta: f64,
    /// Wall time of the cross-validation estimate.
    pub seconds: f64,
    pub n_fits: usize,
    pub hyperparameters: Hyperparameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub n_trials: usize,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub mean_abs_delta: f64,
    /// Δε of the trial with the lowest ε̂.
    pub delta_min: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialLedger {
    pub rows: Vec<TrialRow>,
    /// `(trial_id, message)` for trials that failed to fit.
    pub failures: Vec<(usize, String)>,
}

fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub const LEDGER_HEADER: [&str; 10] =
    ["trial_id", "scheme", "hpo", "model", "eps_hat_mw", "eps_mw", "delta_mw", "seconds", "n_fits", "hyperparams_json"];

impl TrialLedger {
    pub fn summary(&self) -> Option<LedgerSummary> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let deltas: Vec<f64> = self.rows.iter().map(|r| r.delta).collect();
        let best = self.rows.iter().reduce(|a, b| if b.eps_hat < a.eps_hat { b } else { a }).expect("non-empty");
        Some(LedgerSummary {
            n_trials: self.rows.len(),
            mean_delta: deltas.iter().sum::<f64>() / n,
            std_delta: sample_std(&deltas),
            mean_abs_delta: deltas.iter().map(|d| d.abs()).sum::<f64>() / n,
            delta_min: best.delta,
            mean_seconds: self.rows.iter().map(|r| r.seconds).sum::<f64>() / n,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| CrossvalError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LEDGER_HEADER).map_err(io)?;
        for r in &self.rows {
            let hp = serde_json::to_string(&r.hyperparameters).map_err(|e| CrossvalError::Io(e.to_string()))?;
            w.write_record([
                r.trial_id.to_string(),
                r.scheme.clone(),
                r.hpo.clone(),
                r.model.clone(),
                r.eps_hat.to_string(),
                r.eps.to_string(),
                r.delta.to_string(),
                r.seconds.to_string(),
                r.n_fits.to_string(),
                hp,
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| CrossvalError::Io(e.to_string()))
    }
}

struct TrialOutcome {
    eps: f64,
    seconds: f64,
    n_fits: usize,
}

/// For every hyperparameter point chosen by the search: ε̂ by cross
/// validation inside `train_rows`, ε by fitting on all of `train_rows` and
/// scoring `val_rows`. The search minimizes ε̂.
pub fn run_delta_eps_experiment(
    space: &HpSpace,
    base: &ModelSpec,
    view: &DatasetView,
    train_rows: &[usize],
    val_rows: &[usize],
    cfg: &DeltaEpsConfig,
) -> Result<TrialLedger> {
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(CrossvalError::InvalidParams("empty training or validation window".into()));
    }
    if train_rows.iter().max() >= val_rows.iter().min() {
        return Err(CrossvalError::WindowOrder);
    }
    space.validate_for(base.family)?;
    let plan = make_splits(train_rows.len(), &cfg.scheme)?.remap(train_rows);
    let y_val = view.original_target(val_rows);

    let objective = |trial: usize, hp: &Hyperparameters| -> std::result::Result<(f64, TrialOutcome), String> {
        let mut spec = hpo::spec_with(base, hp);
        spec.seed = rng::derive(cfg.seed, trial as u64);
        let start = Instant::now();
        let est = estimate_generalization_error(&spec, view, &plan).map_err(|e| e.to_string())?;
        let seconds = start.elapsed().as_secs_f64();
        let m = models::fit(&spec, view, train_rows).map_err(|e| e.to_string())?;
        let pred = m.predict_original(view, val_rows).map_err(|e| e.to_string())?;
        Ok((est.eps_hat, TrialOutcome { eps: rmse_any(&y_val, &pred), seconds, n_fits: est.n_fits }))
    };
    let history = if space.dims.is_empty() {
        hpo::random_search(space, objective, cfg.n_trials, cfg.seed)?
    } else {
        match &cfg.hpo {
            HpoAlgo::Random => hpo::random_search(space, objective, cfg.n_trials, cfg.seed)?,
            HpoAlgo::Bayesian { config } => hpo::bayesian_search(space, objective, cfg.n_trials, config, cfg.seed)?,
        }
    };

    let mut ledger = TrialLedger::default();
    for t in history.trials {
        match t.outcome {
            Ok((eps_hat, o)) => ledger.rows.push(TrialRow {
                trial_id: t.id,
                scheme: cfg.scheme.label(),
                hpo: cfg.hpo.as_str().into(),
                model: base.family.as_str().into(),
                eps_hat,
                eps: o.eps,
                delta: o.eps - eps_hat,
                seconds: o.seconds,
                n_fits: o.n_fits,
                hyperparameters: t.params,
            }),
            Err(msg) => ledger.failures.push((t.id, msg)),
        }
    }
    if ledger.rows.is_empty() {
        let first = ledger.failures.first().map(|f| f.1.clone()).unwrap_or_default();
        return Err(CrossvalError::AllTrialsFailed(first));
    }
    Ok(ledger)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSweepRow {
    pub size: usize,
    pub mean_abs_delta: f64,
    pub std_abs_delta: f64,
    pub summary: LedgerSummary,
}

/// Repeats the experiment on the most recent `size` rows of the training
/// window for each size.
pub fn dataset_size_sweep(
    space: &HpSpace,
    base: &ModelSpec,
    view: &DatasetView,
    train_rows: &[usize],
    val_rows: &[usize],
    sizes: &[usize],
    cfg: &DeltaEpsConfig,
) -> Result<Vec<SizeSweepRow>> {
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CrossvalError::UnsortedSizes);
    }
    if let Some(&size) = sizes.iter().find(|&&s| s > train_rows.len()) {
        return Err(CrossvalError::SizeExceedsWindow { size, window: train_rows.len() });
    }
    sizes
        .iter()
        .map(|&size| {
            let window = &train_rows[train_rows.len() - size..];
            let ledger = run_delta_eps_experiment(space, base, view, window, val_rows, cfg)?;
            let abs: Vec<f64> = ledger.rows.iter().map(|r| r.delta.abs()).collect();
            let summary = ledger.summary().expect("non-empty ledger");
            Ok(SizeSweepRow { size, mean_abs_delta: summary.mean_abs_delta, std_abs_delta: sample_std(&abs), summary })
        })
        .collect()
}

/// One radar-chart entry: aggregates of a ledger keyed by scheme, model and
/// search algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: String,
    pub model: String,
    pub hpo: String,
    pub summary: LedgerSummary,
}

pub fn write_summary_csv<W: Write>(rows: &[SchemeSummary], out: W) -> Result<()> {
    let io = |e: csv::Error| CrossvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "model", "hpo", "n_trials", "mean_delta_mw", "std_delta_mw", "delta_min_mw", "mean_abs_delta_mw", "seconds_per_iter"])
        .map_err(io)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.scheme.clone(),
            r.model.clone(),
            r.hpo.clone(),
            s.n_trials.to_string(),
            s.mean_delta.to_string(),
            s.std_delta.to_string(),
            s.delta_min.to_string(),
            s.mean_abs_delta.to_string(),
            s.mean_seconds.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CrossvalError::Io(e.to_string()))
}

pub fn write_size_sweep_csv<W: Write>(model: &str, scheme: &str, rows: &[SizeSweepRow], out: W) -> Result<()> {
    let io = |e: csv::Error| CrossvalError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "scheme", "size_days", "mean_abs_delta_mw", "std_abs_delta_mw", "mean_delta_mw"]).map_err(io)?;
    for r in rows {
        w.write_record([
            model.to_string(),
            scheme.to_string(),
            r.size.to_string(),
            r.mean_abs_delta.to_string(),
            r.std_abs_delta.to_string(),
            r.summary.mean_delta.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CrossvalError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> Vec<usize> {
        v.to_vec()
    }

    #[test]
    fn expanding_and_sliding_examples() {
        let p = make_splits(8, &SchemeParams::new(Scheme::Expanding).with_k(4)).unwrap();
        assert_eq!(
            p.iterations,
            vec![
                (set(&[0, 1]), set(&[2, 3])),
                (set(&[0, 1, 2, 3]), set(&[4, 5])),
                (set(&[0, 1, 2, 3, 4, 5]), set(&[6, 7])),
            ]
        );
        let p = make_splits(8, &SchemeParams::new(Scheme::Sliding).with_k(4)).unwrap();
        assert_eq!(
            p.iterations,
            vec![(set(&[0, 1]), set(&[2, 3])), (set(&[2, 3]), set(&[4, 5])), (set(&[4, 5]), set(&[6, 7]))]
        );
    }

    #[test]
    fn kfold_tests_each_index_once() {
        let p = make_splits(10, &SchemeParams::new(Scheme::Kfold).with_k(5)).unwrap();
        let mut seen: Vec<usize> = p.iterations.iter().flat_map(|(_, t)| t.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_takes_the_tail() {
        let mut s = SchemeParams::new(Scheme::Holdout);
        s.test_rows = Some(365);
        let p = make_splits(3650, &s).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.iterations[0].1, (3285..3650).collect::<Vec<_>>());
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(make_splits(7, &SchemeParams::new(Scheme::Kfold).with_k(4)), Err(CrossvalError::TooFewSamples { .. })));
        assert!(make_splits(100, &SchemeParams::new(Scheme::Kfold).with_k(1)).is_err());
        assert!(make_splits(100, &SchemeParams::new(Scheme::Expanding).shuffled()).is_err());
        assert!(make_splits(5, &SchemeParams::new(Scheme::Blocking)).is_err());
    }

    #[test]
    fn blocking_assigns_whole_blocks() {
        let p = make_splits(100, &SchemeParams::new(Scheme::Blocking).with_seed(4)).unwrap();
        let (train, test) = &p.iterations[0];
        assert_eq!(train.len() + test.len(), 100);
        for b in 0..15 {
            let in_test: Vec<bool> = (b * 7..((b + 1) * 7).min(100)).map(|i| test.contains(&i)).collect();
            assert!(in_test.iter().all(|&t| t == in_test[0]));
        }
        assert_eq!(p, make_splits(100, &SchemeParams::new(Scheme::Blocking).with_seed(4)).unwrap());
    }

    #[test]
    fn ledger_summary_and_csv() {
        let row = |id: usize, eps_hat: f64, eps: f64| TrialRow {
            trial_id: id,
            scheme: "kfold".into(),
            hpo: "random".into(),
            model: "linear".into(),
            eps_hat,
            eps,
            delta: eps - eps_hat,
            seconds: 0.5,
            n_fits: 10,
            hyperparameters: Hyperparameters::new(),
        };
        let ledger = TrialLedger { rows: vec![row(0, 3.0, 4.0), row(1, 2.0, 5.0), row(2, 4.0, 3.0)], failures: vec![] };
        let s = ledger.summary().unwrap();
        assert_eq!(s.delta_min, 3.0);
        assert!((s.mean_delta - 1.0).abs() < 1e-12);
        assert!((s.std_delta - 2.0).abs() < 1e-12);
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&LEDGER_HEADER.join(",")));
        assert!(text.contains("\n1,kfold,random,linear,2,5,3,0.5,10,{}\n"));
    }

    #[test]
    fn scheme_params_json() {
        let p: SchemeParams = serde_json::from_str(r#"{"scheme":"kfold","shuffle":true,"k":5}"#).unwrap();
        assert_eq!(p.label(), "kfold_shuffled");
        assert_eq!(p.block_len, 7);
        assert!(serde_json::from_str::<SchemeParams>(r#"{"scheme":"kfold","folds":5}"#).is_err());
        let a: HpoAlgo = serde_json::from_str(r#"{"algorithm":"bayesian","n_initial":5}"#).unwrap();
        assert_eq!(a, HpoAlgo::Bayesian { config: BayesConfig { n_initial: 5, ..BayesConfig::default() } });
    }
}
