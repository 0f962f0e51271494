//! CART regression trees with constant or linear leaves, bagged forests and
//! squared-loss gradient boosting.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{invalid, Family, ModelError, ModelSpec, Result};
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafKind {
    Constant,
    Linear,
}

/// Number of candidate features drawn at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Third,
    All,
}

impl MaxFeatures {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sqrt" => Some(MaxFeatures::Sqrt),
            "third" => Some(MaxFeatures::Third),
            "all" => Some(MaxFeatures::All),
            _ => None,
        }
    }

    pub fn count(&self, p: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (p as f64).sqrt().round() as usize,
            MaxFeatures::Third => p / 3,
            MaxFeatures::All => p,
        };
        k.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub leaf_kind: LeafKind,
    /// Ridge strength of linear leaves per leaf row, in standardized units.
    pub leaf_ridge: f64,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl TreeParams {
    pub fn new(max_depth: usize, min_leaf: usize, leaf_kind: LeafKind) -> Self {
        TreeParams { max_depth, min_leaf, leaf_kind, leaf_ridge: 1e-10, max_features: None }
    }

    fn from_spec(spec: &ModelSpec, n_rows: usize, default_depth: usize, default_leaf: usize) -> Result<Self> {
        let leaf_kind = match spec.family {
            Family::LinearForest | Family::LinearGbt => LeafKind::Linear,
            _ => LeafKind::Constant,
        };
        let leaf_ridge = spec.float("leaf_ridge", 1e-10);
        if !(leaf_ridge >= 0.0) {
            return Err(invalid("leaf_ridge", "must be non-negative".into()));
        }
        let min_leaf = spec.count("min_leaf", default_leaf, 1)?.min((n_rows / 2).max(1));
        Ok(TreeParams {
            max_depth: spec.count("max_depth", default_depth, 0)?,
            min_leaf,
            leaf_kind,
            leaf_ridge,
            max_features: None,
        })
    }
}

/// Linear leaf model `intercept + weights · x` on raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

/// Flat tree. Node `k` is a leaf when `feature[k] < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i64>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// Leaf mean (also stored for internal nodes).
    pub value: Vec<f64>,
    /// Index into `leaf_models` per node, or -1.
    pub leaf_model: Vec<i64>,
    pub leaf_models: Vec<LeafModel>,
}

impl Tree {
    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.feature.iter().filter(|&&f| f < 0).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            if t.feature[k] < 0 {
                0
            } else {
                1 + go(t, t.left[k] as usize).max(go(t, t.right[k] as usize))
            }
        }
        go(self, 0)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0usize;
        while self.feature[k] >= 0 {
            let f = self.feature[k] as usize;
            k = if row[f] <= self.threshold[k] { self.left[k] } else { self.right[k] } as usize;
        }
        match self.leaf_model[k] {
            m if m >= 0 => {
                let lm = &self.leaf_models[m as usize];
                lm.intercept + lm.weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>()
            }
            _ => self.value[k],
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = x.as_standard_layout();
        x.rows().into_iter().map(|r| self.predict_row(r.as_slice().expect("standard layout"))).collect()
    }

    fn push(&mut self, value: f64) -> usize {
        self.feature.push(-1);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.leaf_model.push(-1);
        self.feature.len() - 1
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: &'a TreeParams,
    rng: Option<rng::Rng>,
    tree: Tree,
}

struct Split {
    feature: usize,
    threshold: f64,
    sse: f64,
}

impl Grower<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        let node = self.tree.push(mean);
        let split = if depth < self.params.max_depth && n >= 2 * self.params.min_leaf {
            self.best_split(rows)
        } else {
            None
        };
        match split {
            Some(s) => {
                let mut cut = 0;
                for i in 0..n {
                    if self.x[[rows[i], s.feature]] <= s.threshold {
                        rows.swap(i, cut);
                        cut += 1;
                    }
                }
                let (l, r) = rows.split_at_mut(cut);
                let li = self.build(l, depth + 1);
                let ri = self.build(r, depth + 1);
                self.tree.feature[node] = s.feature as i64;
                self.tree.threshold[node] = s.threshold;
                self.tree.left[node] = li as u32;
                self.tree.right[node] = ri as u32;
            }
            None => {
                if self.params.leaf_kind == LeafKind::Linear {
                    let lm = fit_leaf(self.x, self.y, rows, self.params.leaf_ridge);
                    self.tree.leaf_model[node] = self.tree.leaf_models.len() as i64;
                    self.tree.leaf_models.push(lm);
                }
            }
        }
        node
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.ncols();
        match (self.params.max_features, self.rng.as_mut()) {
            (Some(k), Some(r)) if k < p => {
                let mut f = sample(r, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Split> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let scale = total_sq.max(1e-300);
        if parent_sse <= 1e-14 * scale {
            return None;
        }
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in self.candidate_features() {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let (mut s, mut sq) = (0.0, 0.0);
            for i in 0..n - 1 {
                s += pairs[i].1;
                sq += pairs[i].1 * pairs[i].1;
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf || pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let sr = total - s;
                let sqr = total_sq - sq;
                let sse = (sq - s * s / nl as f64) + (sqr - sr * sr / (n - nl) as f64);
                if best.as_ref().is_none_or(|b| sse < b.sse) {
                    let mut threshold = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                    if threshold >= pairs[i + 1].0 {
                        threshold = pairs[i].0;
                    }
                    best = Some(Split { feature: f, threshold, sse });
                }
            }
        }
        best.filter(|b| b.sse < parent_sse - 1e-12 * scale)
    }
}

/// Ridge fit on standardized leaf inputs, mapped back to raw units.
fn fit_leaf(x: ArrayView2<'_, f64>, y: &[f64], rows: &[usize], ridge: f64) -> LeafModel {
    let n = rows.len();
    let p = x.ncols();
    let ybar = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let mut weights = vec![0.0; p];
    let mut mu = vec![0.0; p];
    let mut sd = vec![0.0; p];
    let mut keep = Vec::new();
    for j in 0..p {
        mu[j] = rows.iter().map(|&r| x[[r, j]]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|&r| (x[[r, j]] - mu[j]).powi(2)).sum::<f64>() / n as f64;
        sd[j] = var.sqrt();
        if sd[j] > 1e-12 * (1.0 + mu[j].abs()) {
            keep.push(j);
        }
    }
    if !keep.is_empty() && n >= 2 {
        let a = nalgebra::DMatrix::from_fn(n, keep.len(), |i, k| (x[[rows[i], keep[k]]] - mu[keep[k]]) / sd[keep[k]]);
        let b = nalgebra::DVector::from_iterator(n, rows.iter().map(|&r| y[r] - ybar));
        let coef = crate::linalg::ridge_solve(&a, &b, ridge * n as f64, &vec![true; keep.len()]);
        for (k, &j) in keep.iter().enumerate() {
            weights[j] = coef[k] / sd[j];
        }
    }
    let intercept = ybar - weights.iter().zip(&mu).map(|(w, m)| w * m).sum::<f64>();
    LeafModel { intercept, weights }
}

/// Greedy CART on all rows of `x`. Fails when `n < 2 * min_leaf`.
pub fn grow_tree(x: ArrayView2<'_, f64>, y: &[f64], params: &TreeParams) -> Result<Tree> {
    let rows: Vec<usize> = (0..y.len()).collect();
    grow_tree_rows(x, y, rows, params, None)
}

fn grow_tree_rows(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    mut rows: Vec<usize>,
    params: &TreeParams,
    rng: Option<rng::Rng>,
) -> Result<Tree> {
    if rows.is_empty() {
        return Err(ModelError::EmptyRows);
    }
    if rows.len() < 2 * params.min_leaf.max(1) && params.max_depth > 0 {
        return Err(ModelError::TooFewRows { rows: rows.len(), min_leaf: params.min_leaf });
    }
    let empty = Tree {
        feature: vec![],
        threshold: vec![],
        left: vec![],
        right: vec![],
        value: vec![],
        leaf_model: vec![],
        leaf_models: vec![],
    };
    let mut g = Grower { x, y, params, rng, tree: empty };
    g.build(&mut rows, 0);
    Ok(g.tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub tree: TreeParams,
}

impl ForestParams {
    pub fn from_spec(spec: &ModelSpec, n_rows: usize) -> Result<Self> {
        let mf = spec.text("max_features", "sqrt");
        let max_features =
            MaxFeatures::parse(mf).ok_or_else(|| invalid("max_features", format!("expected sqrt, third or all, got `{mf}`")))?;
        Ok(ForestParams {
            n_trees: spec.count("n_trees", 100, 1)?,
            max_features,
            tree: TreeParams::from_spec(spec, n_rows, 12, 5)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

/// Bagged trees, each on a bootstrap sample with its own random substream.
pub fn fit_forest(x: ArrayView2<'_, f64>, y: &[f64], params: &ForestParams, seed: u64) -> Result<Forest> {
    let n = y.len();
    if n == 0 {
        return Err(ModelError::EmptyRows);
    }
    let mut tp = params.tree;
    tp.max_features = Some(params.max_features.count(x.ncols()));
    let x = x.as_standard_layout();
    let trees = par::map_range(params.n_trees, |t| {
        let mut r = rng::substream(seed, t as u64);
        let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        grow_tree_rows(x.view(), y, rows, &tp, Some(r))
    });
    Ok(Forest { trees: trees.into_iter().collect::<Result<_>>()? })
}

impl Forest {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = x.as_standard_layout();
        let k = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|r| {
                let row = r.as_slice().expect("standard layout");
                self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / k
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl GbtParams {
    pub fn from_spec(spec: &ModelSpec, n_rows: usize) -> Result<Self> {
        Ok(GbtParams {
            n_rounds: spec.count("n_rounds", 100, 1)?,
            learning_rate: spec.float("learning_rate", 0.1),
            tree: TreeParams::from_spec(spec, n_rows, 3, 5)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(invalid("n_rounds", "must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid("learning_rate", format!("must lie in (0, 1], got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbt {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Training MSE after each round.
    pub train_loss: Vec<f64>,
}

/// Stagewise fitting of trees to squared-loss residuals.
pub fn fit_gbt(x: ArrayView2<'_, f64>, y: &[f64], params: &GbtParams) -> Result<Gbt> {
    params.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(ModelError::EmptyRows);
    }
    let x = x.as_standard_layout();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let resid: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
        let tree = grow_tree(x.view(), &resid, &params.tree)?;
        for (i, r) in x.rows().into_iter().enumerate() {
            f[i] += params.learning_rate * tree.predict_row(r.as_slice().expect("standard layout"));
        }
        train_loss.push(y.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64);
        trees.push(tree);
    }
    Ok(Gbt { base, learning_rate: params.learning_rate, trees, train_loss })
}

impl Gbt {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = x.as_standard_layout();
        x.rows()
            .into_iter()
            .map(|r| {
                let row = r.as_slice().expect("standard layout");
                self.base + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
            })
            .collect()
    }
}
