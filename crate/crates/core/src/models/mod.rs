//! Uniform fit/predict interface over the model families.
//!
//! Every family is trained on the rows of a [`DatasetView`] selected by
//! index and predicts in the view's modeled units (detrended when the view
//! carries a target trend).

pub mod cnn;
pub mod gam;
pub mod linear;
pub mod mlp;
mod serial;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{DatasetView, ViewKind};

pub use cnn::{Cnn, CnnArch};
pub use gam::{bspline_basis, fit_gam, Gam, GamParams};
pub use linear::{fit_linear, LinearModel};
pub use mlp::{Activation, Mlp, MlpArch};
pub use serial::{load_model, model_from_parts, model_to_parts, save_model};
pub use tree::{fit_forest, fit_gbt, grow_tree, Forest, ForestParams, Gbt, GbtParams, LeafKind, MaxFeatures, Tree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("family {family} cannot be trained on a {kind} view")]
    ViewKindMismatch { family: Family, kind: &'static str },
    #[error("training loss became non-finite at epoch {epoch} (learning rate {learning_rate}); lower the learning rate")]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("model produced a non-finite prediction")]
    NonFinitePrediction,
    #[error("input does not match the training schema: {0}")]
    SchemaMismatch(String),
    #[error("unknown hyperparameter `{name}` for family {family}")]
    UnknownHyperparameter { family: Family, name: String },
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: String, reason: String },
    #[error("no training rows")]
    EmptyRows,
    #[error("{rows} rows cannot hold two leaves of at least {min_leaf} rows")]
    TooFewRows { rows: usize, min_leaf: usize },
    #[error("penalized system is singular; increase lambda")]
    SingularSystem,
    #[error("model serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Forest,
    LinearForest,
    Gbt,
    LinearGbt,
    Gam,
    Mlp,
    Cnn,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Linear,
        Family::Forest,
        Family::LinearForest,
        Family::Gbt,
        Family::LinearGbt,
        Family::Gam,
        Family::Mlp,
        Family::Cnn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Forest => "forest",
            Family::LinearForest => "linear_forest",
            Family::Gbt => "gbt",
            Family::LinearGbt => "linear_gbt",
            Family::Gam => "gam",
            Family::Mlp => "mlp",
            Family::Cnn => "cnn",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.as_str() == s)
    }

    pub fn accepts(&self, kind: ViewKind) -> bool {
        (*self == Family::Cnn) == (kind == ViewKind::Image)
    }

    /// Hyperparameters the family understands.
    pub fn hyperparameters(&self) -> &'static [(&'static str, HpKind)] {
        use HpKind::*;
        const TREE: [(&str, HpKind); 3] = [("max_depth", Int), ("min_leaf", Int), ("n_components", Int)];
        match self {
            Family::Linear => &[("alpha", Float), ("n_components", Int)],
            Family::Forest => &[
                ("n_trees", Int),
                ("max_features", Text),
                TREE[0],
                TREE[1],
                TREE[2],
            ],
            Family::LinearForest => &[
                ("n_trees", Int),
                ("max_features", Text),
                ("leaf_ridge", Float),
                TREE[0],
                TREE[1],
                TREE[2],
            ],
            Family::Gbt => &[("n_rounds", Int), ("learning_rate", Float), TREE[0], TREE[1], TREE[2]],
            Family::LinearGbt => &[
                ("n_rounds", Int),
                ("learning_rate", Float),
                ("leaf_ridge", Float),
                TREE[0],
                TREE[1],
                TREE[2],
            ],
            Family::Gam => &[("n_knots", Int), ("lambda", Float), ("n_components", Int)],
            Family::Mlp => &[
                ("hidden_units", Int),
                ("hidden_layers", Int),
                ("activation", Text),
                ("learning_rate", Float),
                ("momentum", Float),
                ("batch_size", Int),
                ("epochs", Int),
                ("patience", Int),
                ("n_components", Int),
            ],
            Family::Cnn => &[
                ("conv1_channels", Int),
                ("conv2_channels", Int),
                ("dense_units", Int),
                ("pool", Text),
                ("activation", Text),
                ("learning_rate", Float),
                ("momentum", Float),
                ("batch_size", Int),
                ("epochs", Int),
                ("patience", Int),
            ],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpKind {
    Int,
    Float,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HpValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for HpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HpValue::Int(v) => write!(f, "{v}"),
            HpValue::Float(v) => write!(f, "{v}"),
            HpValue::Text(v) => f.write_str(v),
        }
    }
}

pub type Hyperparameters = BTreeMap<String, HpValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        ModelSpec { family, hyperparameters: BTreeMap::new(), seed }
    }

    pub fn with(mut self, name: &str, value: HpValue) -> Self {
        self.hyperparameters.insert(name.to_string(), value);
        self
    }

    pub fn with_int(self, name: &str, v: i64) -> Self {
        self.with(name, HpValue::Int(v))
    }

    pub fn with_float(self, name: &str, v: f64) -> Self {
        self.with(name, HpValue::Float(v))
    }

    pub fn with_text(self, name: &str, v: &str) -> Self {
        self.with(name, HpValue::Text(v.to_string()))
    }

    /// Checks names and value types against the family declaration.
    pub fn validate(&self) -> Result<()> {
        let decl = self.family.hyperparameters();
        for (name, value) in &self.hyperparameters {
            let Some((_, kind)) = decl.iter().find(|(n, _)| n == name) else {
                return Err(ModelError::UnknownHyperparameter { family: self.family, name: name.clone() });
            };
            let ok = matches!(
                (kind, value),
                (HpKind::Int, HpValue::Int(_))
                    | (HpKind::Float, HpValue::Float(_))
                    | (HpKind::Float, HpValue::Int(_))
                    | (HpKind::Text, HpValue::Text(_))
            );
            if !ok {
                return Err(invalid(name, format!("expected {kind:?}, got {value}")));
            }
            if let HpValue::Float(v) = value {
                if !v.is_finite() {
                    return Err(invalid(name, "must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn int(&self, name: &str, default: i64) -> i64 {
        match self.hyperparameters.get(name) {
            Some(HpValue::Int(v)) => *v,
            Some(HpValue::Float(v)) => v.round() as i64,
            _ => default,
        }
    }

    /// Integer hyperparameter that must be at least `min`.
    pub fn count(&self, name: &str, default: usize, min: usize) -> Result<usize> {
        let v = self.int(name, default as i64);
        if v < min as i64 {
            return Err(invalid(name, format!("must be at least {min}, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn float(&self, name: &str, default: f64) -> f64 {
        match self.hyperparameters.get(name) {
            Some(HpValue::Float(v)) => *v,
            Some(HpValue::Int(v)) => *v as f64,
            _ => default,
        }
    }

    pub fn text<'a>(&'a self, name: &str, default: &'a str) -> &'a str {
        match self.hyperparameters.get(name) {
            Some(HpValue::Text(v)) => v,
            _ => default,
        }
    }

    pub fn hyperparameters_json(&self) -> String {
        serde_json::to_string(&self.hyperparameters).expect("plain map serializes")
    }
}

pub(crate) fn invalid(name: &str, reason: String) -> ModelError {
    ModelError::InvalidHyperparameter { name: name.to_string(), reason }
}

/// What a fitted model expects from a view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSchema {
    pub kind: ViewKind,
    /// Column indices into `x_tab`.
    pub columns: Vec<usize>,
    pub feature_names: Vec<String>,
    /// `(channels, nlat, nlon)` for image models.
    pub image_shape: Option<[usize; 3]>,
    pub channel_names: Vec<String>,
}

impl InputSchema {
    fn of(view: &DatasetView, columns: Vec<usize>) -> Self {
        let image_shape = view.x_img.as_ref().map(|x| {
            let (_, c, h, w) = x.dim();
            [c, h, w]
        });
        InputSchema {
            kind: view.kind,
            feature_names: columns.iter().map(|&c| view.feature_names[c].clone()).collect(),
            columns,
            image_shape,
            channel_names: view.channel_names.clone(),
        }
    }

    pub fn check(&self, view: &DatasetView) -> Result<()> {
        if view.kind != self.kind {
            return Err(ModelError::SchemaMismatch(format!(
                "trained on a {} view, got {}",
                self.kind.as_str(),
                view.kind.as_str()
            )));
        }
        for (&c, name) in self.columns.iter().zip(&self.feature_names) {
            if view.feature_names.get(c) != Some(name) {
                return Err(ModelError::SchemaMismatch(format!("column {c} should be `{name}`")));
            }
        }
        let shape = view.x_img.as_ref().map(|x| {
            let (_, c, h, w) = x.dim();
            [c, h, w]
        });
        if shape != self.image_shape {
            return Err(ModelError::SchemaMismatch(format!("image shape {shape:?}, expected {:?}", self.image_shape)));
        }
        if self.image_shape.is_some() && view.channel_names != self.channel_names {
            return Err(ModelError::SchemaMismatch("channel names differ".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub train_rows: usize,
    /// Per-epoch (neural) or per-round (boosting) training MSE.
    pub loss_curve: Vec<f64>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Learned {
    Linear(LinearModel),
    Forest(Forest),
    Gbt(Gbt),
    Gam(Gam),
    Mlp(Mlp),
    Cnn(Cnn),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub schema: InputSchema,
    pub diagnostics: Diagnostics,
    pub learned: Learned,
}

/// Rows of the selected columns as a dense matrix.
pub(crate) fn gather(view: &DatasetView, columns: &[usize], rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), columns.len()), |(i, j)| view.x_tab[[rows[i], columns[j]]])
}

pub fn fit(spec: &ModelSpec, view: &DatasetView, rows: &[usize]) -> Result<FittedModel> {
    spec.validate()?;
    if !spec.family.accepts(view.kind) {
        return Err(ModelError::ViewKindMismatch { family: spec.family, kind: view.kind.as_str() });
    }
    if rows.is_empty() {
        return Err(ModelError::EmptyRows);
    }
    let n_components = spec.hyperparameters.get("n_components").map(|_| spec.count("n_components", 1, 1)).transpose()?;
    let columns = if spec.family == Family::Cnn {
        (0..view.n_features()).collect()
    } else {
        view.tabular_columns(n_components)
    };
    let schema = InputSchema::of(view, columns);
    let y = view.target(rows);
    let mut diagnostics = Diagnostics { train_rows: rows.len(), ..Default::default() };
    let learned = match spec.family {
        Family::Cnn => {
            let m = cnn::fit_cnn(spec, view, rows, &mut diagnostics)?;
            Learned::Cnn(m)
        }
        family => {
            let x = gather(view, &schema.columns, rows);
            match family {
                Family::Linear => Learned::Linear(fit_linear(x.view(), &y, spec.float("alpha", 0.0))?),
                Family::Forest | Family::LinearForest => {
                    let p = ForestParams::from_spec(spec, rows.len())?;
                    Learned::Forest(fit_forest(x.view(), &y, &p, spec.seed)?)
                }
                Family::Gbt | Family::LinearGbt => {
                    let p = GbtParams::from_spec(spec, rows.len())?;
                    let g = fit_gbt(x.view(), &y, &p)?;
                    diagnostics.loss_curve = g.train_loss.clone();
                    Learned::Gbt(g)
                }
                Family::Gam => Learned::Gam(fit_gam(x.view(), &y, &GamParams::from_spec(spec)?)?),
                Family::Mlp => Learned::Mlp(mlp::fit_mlp(spec, x.view(), &y, &mut diagnostics)?),
                Family::Cnn => unreachable!("handled above"),
            }
        }
    };
    Ok(FittedModel { spec: spec.clone(), schema, diagnostics, learned })
}

impl FittedModel {
    /// Predictions in the view's modeled units, one per row.
    pub fn predict(&self, view: &DatasetView, rows: &[usize]) -> Result<Vec<f64>> {
        self.schema.check(view)?;
        let out = match &self.learned {
            Learned::Cnn(m) => m.predict_view(view, rows),
            other => {
                let x = gather(view, &self.schema.columns, rows);
                match other {
                    Learned::Linear(m) => m.predict(x.view()),
                    Learned::Forest(m) => m.predict(x.view()),
                    Learned::Gbt(m) => m.predict(x.view()),
                    Learned::Gam(m) => m.predict(x.view()),
                    Learned::Mlp(m) => m.predict(x.view()),
                    Learned::Cnn(_) => unreachable!("handled above"),
                }
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinitePrediction);
        }
        Ok(out)
    }

    /// Predictions mapped back to original target units.
    pub fn predict_original(&self, view: &DatasetView, rows: &[usize]) -> Result<Vec<f64>> {
        let p = self.predict(view, rows)?;
        Ok(view.to_original(rows, &p))
    }
}
