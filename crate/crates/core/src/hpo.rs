//! Hyperparameter search: random search and Gaussian-process Bayesian
//! search with expected improvement.
//!
//! Points live in a latent unit cube. Numeric dimensions take one
//! coordinate; a categorical dimension takes one coordinate per choice
//! (one-hot, relaxed to `[0, 1]` for the surrogate and snapped to the
//! largest coordinate on decode).

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use crate::models::{Family, HpKind, HpValue, Hyperparameters, ModelSpec};
use crate::{linalg, par, rng};

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("the surrogate needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("kernel matrix stayed ill-conditioned after jitter {0:e}")]
    IllConditioned(f64),
}

pub type Result<T> = std::result::Result<T, HpoError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DimKind {
    Int { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64 },
    LogFloat { lo: f64, hi: f64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl Dim {
    pub fn int(name: &str, lo: i64, hi: i64) -> Self {
        Dim { name: name.into(), kind: DimKind::Int { lo, hi } }
    }
    pub fn float(name: &str, lo: f64, hi: f64) -> Self {
        Dim { name: name.into(), kind: DimKind::Float { lo, hi } }
    }
    pub fn log_float(name: &str, lo: f64, hi: f64) -> Self {
        Dim { name: name.into(), kind: DimKind::LogFloat { lo, hi } }
    }
    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Dim { name: name.into(), kind: DimKind::Categorical { choices: choices.iter().map(|s| s.to_string()).collect() } }
    }

    fn width(&self) -> usize {
        match &self.kind {
            DimKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpSpace {
    pub dims: Vec<Dim>,
}

impl HpSpace {
    pub fn new(dims: Vec<Dim>) -> Self {
        HpSpace { dims }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, d) in self.dims.iter().enumerate() {
            if self.dims[..k].iter().any(|o| o.name == d.name) {
                return Err(HpoError::InvalidSpace(format!("dimension `{}` declared twice", d.name)));
            }
            let ok = match &d.kind {
                DimKind::Int { lo, hi } => lo < hi,
                DimKind::Float { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
                DimKind::LogFloat { lo, hi } => lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo < hi,
                DimKind::Categorical { choices } => {
                    !choices.is_empty() && choices.iter().enumerate().all(|(i, c)| !choices[..i].contains(c))
                }
            };
            if !ok {
                return Err(HpoError::InvalidSpace(format!("bad bounds or choices for `{}`", d.name)));
            }
        }
        Ok(())
    }

    /// Also checks every dimension against the family's hyperparameters.
    pub fn validate_for(&self, family: Family) -> Result<()> {
        self.validate()?;
        let decl = family.hyperparameters();
        for d in &self.dims {
            let Some((_, kind)) = decl.iter().find(|(n, _)| *n == d.name) else {
                return Err(HpoError::InvalidSpace(format!("`{}` is not a {family} hyperparameter", d.name)));
            };
            let ok = matches!(
                (kind, &d.kind),
                (HpKind::Int, DimKind::Int { .. })
                    | (HpKind::Float, DimKind::Float { .. } | DimKind::LogFloat { .. })
                    | (HpKind::Text, DimKind::Categorical { .. })
            );
            if !ok {
                return Err(HpoError::InvalidSpace(format!("`{}` has the wrong kind for {family}", d.name)));
            }
        }
        Ok(())
    }

    /// Number of latent coordinates.
    pub fn latent_dim(&self) -> usize {
        self.dims.iter().map(Dim::width).sum()
    }

    pub fn decode(&self, u: &[f64]) -> Hyperparameters {
        let mut out = Hyperparameters::new();
        let mut k = 0;
        for d in &self.dims {
            let v = match &d.kind {
                DimKind::Int { lo, hi } => {
                    let span = (hi - lo + 1) as f64;
                    HpValue::Int((lo + (u[k].clamp(0.0, 1.0) * span).floor() as i64).min(*hi))
                }
                DimKind::Float { lo, hi } => HpValue::Float(lo + u[k].clamp(0.0, 1.0) * (hi - lo)),
                DimKind::LogFloat { lo, hi } => {
                    let (a, b) = (lo.ln(), hi.ln());
                    HpValue::Float((a + u[k].clamp(0.0, 1.0) * (b - a)).exp().clamp(*lo, *hi))
                }
                DimKind::Categorical { choices } => {
                    let block = &u[k..k + choices.len()];
                    let mut best = 0;
                    for (i, v) in block.iter().enumerate() {
                        if *v > block[best] {
                            best = i;
                        }
                    }
                    HpValue::Text(choices[best].clone())
                }
            };
            k += d.width();
            out.insert(d.name.clone(), v);
        }
        out
    }

    pub fn encode(&self, hp: &Hyperparameters) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.latent_dim());
        for d in &self.dims {
            let v = hp.get(&d.name);
            match &d.kind {
                DimKind::Int { lo, hi } => {
                    let x = match v {
                        Some(HpValue::Int(x)) => *x,
                        _ => *lo,
                    };
                    u.push(((x - lo) as f64 + 0.5) / (hi - lo + 1) as f64);
                }
                DimKind::Float { lo, hi } => {
                    let x = as_f64(v).unwrap_or(*lo);
                    u.push((x - lo) / (hi - lo));
                }
                DimKind::LogFloat { lo, hi } => {
                    let x = as_f64(v).unwrap_or(*lo);
                    u.push((x.ln() - lo.ln()) / (hi.ln() - lo.ln()));
                }
                DimKind::Categorical { choices } => {
                    let pick = match v {
                        Some(HpValue::Text(s)) => choices.iter().position(|c| c == s).unwrap_or(0),
                        _ => 0,
                    };
                    u.extend((0..choices.len()).map(|i| if i == pick { 1.0 } else { 0.0 }));
                }
            }
        }
        u
    }

    /// One uniform draw: numeric coordinates uniform (log-uniform after
    /// decoding for `log_float`), categoricals a uniformly chosen vertex.
    pub fn sample_unit(&self, r: &mut rng::Rng) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.latent_dim());
        for d in &self.dims {
            match &d.kind {
                DimKind::Categorical { choices } => {
                    let pick = r.random_range(0..choices.len());
                    u.extend((0..choices.len()).map(|i| if i == pick { 1.0 } else { 0.0 }));
                }
                _ => u.push(r.random::<f64>()),
            }
        }
        u
    }

    /// Uniform draws in the relaxed cube, used as EI candidates.
    fn sample_relaxed(&self, r: &mut rng::Rng) -> Vec<f64> {
        (0..self.latent_dim()).map(|_| r.random::<f64>()).collect()
    }

    /// Adds an `n_components` dimension for component views.
    pub fn with_components(mut self, max: usize) -> Self {
        if max >= 2 && !self.dims.iter().any(|d| d.name == "n_components") {
            self.dims.push(Dim::int("n_components", 1, max as i64));
        }
        self
    }
}

fn as_f64(v: Option<&HpValue>) -> Option<f64> {
    match v {
        Some(HpValue::Float(x)) => Some(*x),
        Some(HpValue::Int(x)) => Some(*x as f64),
        _ => None,
    }
}

/// Search space shipped for each family.
pub fn default_space(family: Family) -> HpSpace {
    let dims = match family {
        Family::Linear => vec![Dim::log_float("alpha", 1e-6, 1e2)],
        Family::Forest => vec![
            Dim::int("n_trees", 20, 200),
            Dim::int("max_depth", 3, 20),
            Dim::int("min_leaf", 1, 20),
            Dim::categorical("max_features", &["sqrt", "third", "all"]),
        ],
        Family::LinearForest => vec![
            Dim::int("n_trees", 10, 100),
            Dim::int("max_depth", 1, 8),
            Dim::int("min_leaf", 10, 60),
            Dim::log_float("leaf_ridge", 1e-8, 1.0),
            Dim::categorical("max_features", &["sqrt", "third", "all"]),
        ],
        Family::Gbt => vec![
            Dim::int("n_rounds", 20, 300),
            Dim::log_float("learning_rate", 0.01, 0.3),
            Dim::int("max_depth", 1, 6),
            Dim::int("min_leaf", 1, 30),
        ],
        Family::LinearGbt => vec![
            Dim::int("n_rounds", 10, 100),
            Dim::log_float("learning_rate", 0.01, 0.3),
            Dim::int("max_depth", 1, 4),
            Dim::int("min_leaf", 10, 60),
            Dim::log_float("leaf_ridge", 1e-8, 1.0),
        ],
        Family::Gam => vec![Dim::int("n_knots", 4, 20), Dim::log_float("lambda", 1e-3, 1e4)],
        Family::Mlp => vec![
            Dim::int("hidden_units", 4, 64),
            Dim::int("hidden_layers", 1, 3),
            Dim::categorical("activation", &["tanh", "relu"]),
            Dim::log_float("learning_rate", 1e-4, 3e-2),
            Dim::int("batch_size", 16, 128),
        ],
        Family::Cnn => vec![
            Dim::int("conv1_channels", 4, 16),
            Dim::int("conv2_channels", 8, 32),
            Dim::int("dense_units", 8, 64),
            Dim::categorical("pool", &["max", "avg"]),
            Dim::log_float("learning_rate", 1e-4, 1e-2),
        ],
    };
    HpSpace { dims }
}

/// `base` with the given hyperparameters applied.
pub fn spec_with(base: &ModelSpec, hp: &Hyperparameters) -> ModelSpec {
    let mut s = base.clone();
    for (k, v) in hp {
        s.hyperparameters.insert(k.clone(), v.clone());
    }
    s
}

/// One evaluated point. `outcome` holds the score (lower is better) and the
/// objective's payload, or the failure message.
#[derive(Debug, Clone)]
pub struct Trial<T> {
    pub id: usize,
    pub params: Hyperparameters,
    pub unit: Vec<f64>,
    pub outcome: std::result::Result<(f64, T), String>,
    /// Set when EI was zero everywhere and a uniform point was used.
    pub fallback: bool,
}

impl<T> Trial<T> {
    pub fn score(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|(s, _)| *s).filter(|s| s.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct SearchHistory<T> {
    pub trials: Vec<Trial<T>>,
}

impl<T> SearchHistory<T> {
    /// Index of the lowest-scoring successful trial (first on ties).
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.trials.iter().enumerate() {
            if let Some(s) = t.score() {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn best_trial(&self) -> Option<&Trial<T>> {
        self.best().map(|i| &self.trials[i])
    }
}

/// The `budget` latent points random search evaluates for `seed`.
pub fn random_points(space: &HpSpace, budget: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::substream(seed, 0xa11);
    (0..budget).map(|_| space.sample_unit(&mut r)).collect()
}

fn evaluate<T, F>(space: &HpSpace, first_id: usize, units: Vec<Vec<f64>>, objective: &F) -> Vec<Trial<T>>
where
    T: Send,
    F: Fn(usize, &Hyperparameters) -> std::result::Result<(f64, T), String> + Sync,
{
    let points: Vec<(usize, Vec<f64>, Hyperparameters)> =
        units.into_iter().enumerate().map(|(k, u)| (first_id + k, u.clone(), space.decode(&u))).collect();
    par::map_slice(&points, |(id, u, hp)| Trial { id: *id, params: hp.clone(), unit: u.clone(), outcome: objective(*id, hp), fallback: false })
}

/// `budget` independent uniform draws. Trials may run concurrently; the
/// history is in draw order and does not depend on scheduling.
pub fn random_search<T, F>(space: &HpSpace, objective: F, budget: usize, seed: u64) -> Result<SearchHistory<T>>
where
    T: Send,
    F: Fn(usize, &Hyperparameters) -> std::result::Result<(f64, T), String> + Sync,
{
    space.validate()?;
    if budget == 0 {
        return Err(HpoError::ZeroBudget);
    }
    Ok(SearchHistory { trials: evaluate(space, 0, random_points(space, budget, seed), &objective) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesConfig {
    /// Uniform draws before the surrogate takes over.
    pub n_initial: usize,
    pub n_candidates: usize,
    /// Points proposed per round (constant liar) and evaluated together.
    pub batch: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        BayesConfig { n_initial: 10, n_candidates: 1000, batch: 1 }
    }
}

/// GP-EI search. Each round fits the surrogate to all successful trials,
/// proposes `batch` points (pending ones enter the fit with the current
/// best score as a stand-in) and evaluates them together.
pub fn bayesian_search<T, F>(space: &HpSpace, objective: F, budget: usize, cfg: &BayesConfig, seed: u64) -> Result<SearchHistory<T>>
where
    T: Send,
    F: Fn(usize, &Hyperparameters) -> std::result::Result<(f64, T), String> + Sync,
{
    space.validate()?;
    if budget == 0 {
        return Err(HpoError::ZeroBudget);
    }
    let n_init = cfg.n_initial.clamp(1, budget);
    let mut trials = evaluate(space, 0, random_points(space, n_init, seed), &objective);
    let mut round = 0u64;
    while trials.len() < budget {
        let width = cfg.batch.max(1).min(budget - trials.len());
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for t in &trials {
            if let Some(s) = t.score() {
                xs.push(t.unit.clone());
                ys.push(s);
            }
        }
        let mut proposals = Vec::with_capacity(width);
        let mut fallbacks = Vec::with_capacity(width);
        for k in 0..width {
            let pseed = rng::derive(seed, (round << 16) + k as u64 + 1);
            let fitted = if xs.len() >= 2 && space.latent_dim() > 0 { gp_fit(&xs, &ys, &GpConfig::default()).ok() } else { None };
            let prop = match fitted {
                Some(gp) => {
                    let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
                    propose_ei(&gp, space, best, cfg.n_candidates, pseed)
                }
                None => {
                    let mut r = rng::seeded(pseed);
                    Proposal { point: space.sample_unit(&mut r), ei: 0.0, fallback: true }
                }
            };
            if let Some(best) = ys.iter().copied().reduce(f64::min) {
                xs.push(prop.point.clone());
                ys.push(best);
            }
            fallbacks.push(prop.fallback);
            proposals.push(prop.point);
        }
        let mut batch = evaluate(space, trials.len(), proposals, &objective);
        for (t, f) in batch.iter_mut().zip(fallbacks) {
            t.fallback = f;
        }
        trials.extend(batch);
        round += 1;
    }
    Ok(SearchHistory { trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Candidate length scales (unit-cube units).
    pub length_grid: Vec<f64>,
    /// Candidate noise variances relative to the signal variance.
    pub noise_grid: Vec<f64>,
    /// Coordinate sweeps refining per-dimension length scales.
    pub ard_sweeps: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_grid: vec![0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.5],
            noise_grid: vec![1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 1e-1],
            ard_sweeps: 2,
        }
    }
}

impl GpConfig {
    /// Effectively noise-free: a single tiny noise level.
    pub fn noise_free() -> Self {
        GpConfig { noise_grid: vec![1e-10], ..GpConfig::default() }
    }
}

/// Matérn 5/2 correlation for scaled distance `r`.
pub fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt()
}

/// Fitted GP on standardized scores.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    pub points: Vec<Vec<f64>>,
    pub length_scales: Vec<f64>,
    /// Noise variance relative to `amplitude`.
    pub noise_ratio: f64,
    /// Signal variance in standardized units (profiled).
    pub amplitude: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

struct Candidate {
    lml: f64,
    amplitude: f64,
    jitter: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

fn evaluate_hyper(points: &[Vec<f64>], z: &DVector<f64>, ls: &[f64], noise: f64) -> Option<Candidate> {
    let n = points.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| matern52(scaled_dist(&points[i], &points[j], ls)));
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let (chol, jitter) = linalg::cholesky_jitter(&k, 1e-10, 1e-6)?;
    let alpha = chol.solve(z);
    let quad = z.dot(&alpha).max(1e-300);
    let amplitude = quad / n as f64;
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nf = n as f64;
    let lml = -0.5 * nf * amplitude.ln() - 0.5 * logdet - 0.5 * nf * (1.0 + (2.0 * std::f64::consts::PI).ln());
    lml.is_finite().then_some(Candidate { lml, amplitude, jitter, chol, alpha })
}

/// Fits length scales and noise by maximizing the log marginal likelihood
/// over `cfg`'s grids, first with a shared length scale and then per
/// dimension.
pub fn gp_fit(points: &[Vec<f64>], scores: &[f64], cfg: &GpConfig) -> Result<GpSurrogate> {
    let n = points.len();
    if n < 2 {
        return Err(HpoError::TooFewPoints { needed: 2, got: n });
    }
    let d = points[0].len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let sd = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
    let z = DVector::from_iterator(n, scores.iter().map(|s| (s - mean) / scale));

    let mut best: Option<(Candidate, Vec<f64>, f64)> = None;
    let consider = |ls: Vec<f64>, noise: f64, best: &mut Option<(Candidate, Vec<f64>, f64)>| {
        if let Some(c) = evaluate_hyper(points, &z, &ls, noise) {
            if best.as_ref().is_none_or(|(b, _, _)| c.lml > b.lml) {
                *best = Some((c, ls, noise));
            }
        }
    };
    for &l in &cfg.length_grid {
        for &noise in &cfg.noise_grid {
            consider(vec![l; d], noise, &mut best);
        }
    }
    let Some(noise) = best.as_ref().map(|b| b.2) else {
        return Err(HpoError::IllConditioned(1e-6));
    };
    if d > 1 {
        for _ in 0..cfg.ard_sweeps {
            for dim in 0..d {
                let current = best.as_ref().expect("set above").1.clone();
                for &l in &cfg.length_grid {
                    if l == current[dim] {
                        continue;
                    }
                    let mut ls = current.clone();
                    ls[dim] = l;
                    consider(ls, noise, &mut best);
                }
            }
        }
    }
    let (c, length_scales, noise_ratio) = best.expect("set above");
    Ok(GpSurrogate {
        points: points.to_vec(),
        length_scales,
        noise_ratio,
        amplitude: c.amplitude,
        y_mean: mean,
        y_scale: scale,
        jitter: c.jitter,
        log_marginal_likelihood: c.lml,
        chol: c.chol,
        alpha: c.alpha,
    })
}

impl GpSurrogate {
    /// Posterior mean and variance of the score at `x`, in score units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let kx = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| matern52(scaled_dist(p, x, &self.length_scales))));
        let mu = kx.dot(&self.alpha);
        let v = self.chol.solve(&kx);
        let var = (1.0 - kx.dot(&v)).max(0.0) * self.amplitude;
        (self.y_mean + self.y_scale * mu, var * self.y_scale * self.y_scale)
    }

    /// Observation noise variance in score units.
    pub fn noise_variance(&self) -> f64 {
        (self.noise_ratio + self.jitter) * self.amplitude * self.y_scale * self.y_scale
    }
}

/// `E[max(0, best - f)]` for `f ~ N(mean, sd²)`.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    if !(sd > 0.0) {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / sd;
    let n = Normal::standard();
    ((best - mean) * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub ei: f64,
    /// True when every candidate had zero EI and a uniform draw was returned.
    pub fallback: bool,
}

/// Maximizes EI over `n_candidates` uniform points of the relaxed cube.
pub fn propose_ei(gp: &GpSurrogate, space: &HpSpace, best: f64, n_candidates: usize, seed: u64) -> Proposal {
    let mut r = rng::seeded(seed);
    let cands: Vec<Vec<f64>> = (0..n_candidates.max(1)).map(|_| space.sample_relaxed(&mut r)).collect();
    let eis = par::map_slice(&cands, |c| {
        let (m, v) = gp.posterior(c);
        expected_improvement(m, v.sqrt(), best)
    });
    let mut arg = 0;
    for (i, e) in eis.iter().enumerate() {
        if *e > eis[arg] {
            arg = i;
        }
    }
    if eis[arg] > 0.0 {
        Proposal { point: cands[arg].clone(), ei: eis[arg], fallback: false }
    } else {
        Proposal { point: space.sample_unit(&mut r), ei: 0.0, fallback: true }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space(d: usize) -> HpSpace {
        HpSpace::new((0..d).map(|k| Dim::float(&format!("x{k}"), 0.0, 1.0)).collect())
    }

    fn x_of(hp: &Hyperparameters, k: usize) -> f64 {
        match hp[&format!("x{k}")] {
            HpValue::Float(v) => v,
            _ => unreachable!(),
        }
    }

    #[test]
    fn ei_closed_forms() {
        let sigma = 0.7;
        let want = sigma * (Normal::standard().cdf(1.0) + Normal::standard().pdf(1.0));
        assert!((expected_improvement(2.0 - sigma, sigma, 2.0) - want).abs() <= 1e-9);
        assert!((want / sigma - 1.0833).abs() < 1e-4);
        assert_eq!(expected_improvement(2.0, 0.0, 2.0), 0.0);
        assert!(expected_improvement(50.0, 1e-3, 0.0) >= 0.0);
    }

    #[test]
    fn decode_respects_bounds_and_integrality() {
        let s = HpSpace::new(vec![
            Dim::int("a", 2, 5),
            Dim::log_float("b", 1e-3, 10.0),
            Dim::categorical("c", &["p", "q", "r"]),
        ]);
        let mut r = rng::seeded(1);
        for _ in 0..500 {
            let u = s.sample_relaxed(&mut r);
            let hp = s.decode(&u);
            match (&hp["a"], &hp["b"], &hp["c"]) {
                (HpValue::Int(a), HpValue::Float(b), HpValue::Text(c)) => {
                    assert!((2..=5).contains(a) && (1e-3..=10.0).contains(b) && ["p", "q", "r"].contains(&c.as_str()));
                }
                other => panic!("{other:?}"),
            }
            assert_eq!(s.decode(&s.encode(&hp)), hp);
        }
    }

    #[test]
    fn space_validation() {
        assert!(HpSpace::new(vec![Dim::float("a", 1.0, 1.0)]).validate().is_err());
        assert!(HpSpace::new(vec![Dim::log_float("a", 0.0, 1.0)]).validate().is_err());
        assert!(HpSpace::new(vec![Dim::int("a", 0, 3), Dim::int("a", 0, 4)]).validate().is_err());
        assert!(HpSpace::new(vec![Dim::categorical("a", &[])]).validate().is_err());
        for f in Family::ALL {
            default_space(f).validate_for(f).unwrap();
        }
        assert!(HpSpace::new(vec![Dim::int("n_trees", 1, 3)]).validate_for(Family::Linear).is_err());
        let json = r#"{"dims":[{"name":"alpha","kind":"log_float","lo":0.001,"hi":1.0}]}"#;
        let s: HpSpace = serde_json::from_str(json).unwrap();
        s.validate_for(Family::Linear).unwrap();
    }

    #[test]
    fn random_search_properties() {
        let s = unit_space(1);
        let h = random_search(&s, |_, hp| Ok(((x_of(hp, 0) - 0.3).abs(), ())), 1, 9).unwrap();
        assert_eq!(h.trials.len(), 1);
        assert_eq!(h.best(), Some(0));
        let h = random_search(&s, |_, hp| Ok(((x_of(hp, 0) - 0.3).abs(), ())), 1000, 9).unwrap();
        assert!(h.best_trial().unwrap().score().unwrap() <= 0.01);
        let again = random_search(&s, |_, hp| Ok(((x_of(hp, 0) - 0.3).abs(), ())), 1000, 9).unwrap();
        assert!(h.trials.iter().zip(&again.trials).all(|(a, b)| a.params == b.params));
        let failing = random_search(&s, |i, _| if i % 2 == 0 { Err("boom".into()) } else { Ok((1.0, ())) }, 6, 1).unwrap();
        assert_eq!(failing.trials.len(), 6);
        assert_eq!(failing.best(), Some(1));
        assert!(random_search(&s, |_, _| Ok((0.0, ())), 0, 1).is_err());
    }

    #[test]
    fn gp_interpolates_noise_free_observations() {
        let mut r = rng::seeded(3);
        for n in [3, 8, 20] {
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
            let ys: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
            let gp = gp_fit(&pts, &ys, &GpConfig::noise_free()).unwrap();
            for (p, y) in pts.iter().zip(&ys) {
                let (m, v) = gp.posterior(p);
                assert!((m - y).abs() / gp.y_scale <= 1e-4, "{n}: {m} vs {y}");
                assert!(v <= gp.noise_variance() + 1e-8, "{v}");
            }
        }
    }

    #[test]
    fn gp_duplicate_points() {
        let gp = gp_fit(&[vec![0.4], vec![0.4]], &[1.5, 1.5], &GpConfig::default()).unwrap();
        assert!((gp.posterior(&[0.4]).0 - 1.5).abs() <= 1e-6);
    }

    /// Dense-grid oracle: the direct formula `k*ᵀ (K + s I)⁻¹ y` with the
    /// fitted hyperparameters, computed by Gaussian elimination.
    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gp_sine_matches_direct_formula_and_truth() {
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (2.0 * std::f64::consts::PI * p[0]).sin()).collect();
        let gp = gp_fit(&pts, &ys, &GpConfig::noise_free()).unwrap();
        let n = 8;
        let l = gp.length_scales[0];
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| matern52((pts[i][0] - pts[j][0]).abs() / l)).collect();
                row[i] += gp.noise_ratio + gp.jitter;
                row.push((ys[i] - gp.y_mean) / gp.y_scale);
                row
            })
            .collect();
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        let alpha: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
        let mut se = 0.0;
        for g in 0..=200 {
            let x = g as f64 / 200.0;
            let direct = gp.y_mean + gp.y_scale * (0..n).map(|j| matern52((x - pts[j][0]).abs() / l) * alpha[j]).sum::<f64>();
            let (m, _) = gp.posterior(&[x]);
            assert!((m - direct).abs() < 1e-8);
            se += (m - (2.0 * std::f64::consts::PI * x).sin()).powi(2);
        }
        assert!((se / 201.0).sqrt() <= 0.1);
    }

    #[test]
    fn ei_is_non_negative_on_fuzzed_surrogates() {
        let s = unit_space(3);
        for seed in 0..100u64 {
            let mut r = rng::seeded(1000 + seed);
            let n = 2 + (seed as usize % 12);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| s.sample_unit(&mut r)).collect();
            let ys: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 10.0 - 5.0).collect();
            let gp = gp_fit(&pts, &ys, &GpConfig::default()).unwrap();
            let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
            for _ in 0..100 {
                let c = s.sample_relaxed(&mut r);
                let (m, v) = gp.posterior(&c);
                assert!(v >= 0.0);
                assert!(expected_improvement(m, v.sqrt(), best) >= 0.0);
            }
        }
    }

    #[test]
    fn zero_variance_everywhere_falls_back() {
        let s = unit_space(1);
        let gp = gp_fit(&[vec![0.2], vec![0.8]], &[1.0, 1.0], &GpConfig::default()).unwrap();
        let mut flat = gp.clone();
        flat.amplitude = 0.0;
        let p = propose_ei(&flat, &s, 0.5, 50, 1);
        assert!(p.fallback && p.ei == 0.0);
        assert!(p.point.iter().all(|u| (0.0..=1.0).contains(u)));
    }

    #[test]
    fn bayesian_beats_random_on_bowl() {
        let s = unit_space(2);
        let f = |_: usize, hp: &Hyperparameters| Ok(((x_of(hp, 0) - 0.62).powi(2) + (x_of(hp, 1) - 0.27).powi(2), ()));
        let first_hit = |h: &SearchHistory<()>| {
            let mut best = f64::INFINITY;
            for (i, t) in h.trials.iter().enumerate() {
                best = best.min(t.score().unwrap());
                if best <= 0.05 * 0.5 {
                    return i;
                }
            }
            usize::MAX
        };
        let mut bo = Vec::new();
        let mut rs = Vec::new();
        for seed in 0..11u64 {
            let cfg = BayesConfig { n_initial: 5, n_candidates: 500, batch: 1 };
            bo.push(first_hit(&bayesian_search(&s, f, 50, &cfg, seed).unwrap()));
            rs.push(first_hit(&random_search(&s, f, 50, seed).unwrap()));
        }
        bo.sort_unstable();
        rs.sort_unstable();
        assert!(bo[5] <= rs[5], "{bo:?} {rs:?}");
    }

    #[test]
    fn constant_liar_batches_are_distinct() {
        let s = unit_space(2);
        let f = |_: usize, hp: &Hyperparameters| Ok((x_of(hp, 0) + x_of(hp, 1), ()));
        let cfg = BayesConfig { n_initial: 4, n_candidates: 300, batch: 3 };
        let h = bayesian_search(&s, f, 10, &cfg, 2).unwrap();
        assert_eq!(h.trials.len(), 10);
        assert!(h.trials.iter().enumerate().all(|(i, t)| t.id == i));
        let last: Vec<&Vec<f64>> = h.trials[4..7].iter().map(|t| &t.unit).collect();
        assert!(last[0] != last[1] && last[1] != last[2]);
        let again = bayesian_search(&s, f, 10, &cfg, 2).unwrap();
        assert!(h.trials.iter().zip(&again.trials).all(|(a, b)| a.unit == b.unit));
    }
}
