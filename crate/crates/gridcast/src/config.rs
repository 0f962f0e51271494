//! Experiment configuration.
//!
//! Unknown keys are rejected everywhere. Relative paths resolve against the
//! working directory.

use std::fs;
use std::path::{Path, PathBuf};

use gridcast_core::crossval::{HpoAlgo, Scheme, SchemeParams};
use gridcast_core::eval::{ErrorMetric, MetricOptions, OcclusionConfig};
use gridcast_core::features::{DetrendConfig, SplitSpec, ViewKind};
use gridcast_core::hpo::{BayesConfig, HpSpace};
use gridcast_core::models::{Family, Hyperparameters, ModelSpec};
use gridcast_core::Sector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::synth::SynthSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Fixed values; searched dimensions override them.
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    /// Defaults to the family's shipped space. An empty `dims` list fixes
    /// every hyperparameter.
    #[serde(default)]
    pub space: Option<HpSpace>,
    /// Distinguishes two entries of one family in reports.
    #[serde(default)]
    pub label: Option<String>,
}

impl ModelConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.family.as_str().to_string())
    }

    pub fn base_spec(&self, seed: u64) -> ModelSpec {
        let mut s = ModelSpec::new(self.family, seed);
        s.hyperparameters = self.hyperparameters.clone();
        s
    }

    pub fn space(&self) -> HpSpace {
        let mut s = self.space.clone().unwrap_or_else(|| gridcast_core::hpo::default_space(self.family));
        s.dims.retain(|d| !self.hyperparameters.contains_key(&d.name) || self.space.is_some());
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    pub scheme: SchemeParams,
    pub hpo: HpoAlgo,
    pub n_trials: usize,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig { scheme: SchemeParams::new(Scheme::Expanding).with_k(5), hpo: HpoAlgo::Random, n_trials: 20 }
    }
}

/// Estimated-vs-actual error comparison across schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvBenchConfig {
    #[serde(default = "default_approach")]
    pub approach: ViewKind,
    pub schemes: Vec<SchemeParams>,
    #[serde(default = "default_hpo_list")]
    pub hpo: Vec<HpoAlgo>,
    pub n_trials: usize,
    /// Training-window sizes in days for the size sweep; empty skips it.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Scheme used by the size sweep; the first scheme when absent.
    #[serde(default)]
    pub size_scheme: Option<SchemeParams>,
}

fn default_approach() -> ViewKind {
    ViewKind::Average
}
fn default_hpo_list() -> Vec<HpoAlgo> {
    vec![HpoAlgo::Random]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiConfig {
    #[serde(default = "default_mi_threshold")]
    pub threshold: f64,
    #[serde(default = "default_mi_k")]
    pub k: usize,
}

fn default_mi_threshold() -> f64 {
    0.2
}
fn default_mi_k() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceConfig {
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_metric")]
    pub metric: ErrorMetric,
}

fn default_repeats() -> usize {
    5
}
fn default_metric() -> ErrorMetric {
    ErrorMetric::Rmse
}

fn default_name() -> String {
    "experiment".into()
}
fn default_approaches() -> Vec<ViewKind> {
    vec![ViewKind::Average]
}
fn default_detrend() -> Vec<bool> {
    vec![false]
}
fn default_components() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_metric_options() -> MetricOptions {
    MetricOptions { tolerate_zeros: true }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub sector: Sector,
    pub data_dir: PathBuf,
    /// Used by `synth`; ignored by the other stages.
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    /// Weather variables to use; empty takes every stack in `data_dir/weather`.
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub mi: Option<MiConfig>,
    #[serde(default = "default_true")]
    pub use_price: bool,
    pub split: SplitSpec,
    #[serde(default = "default_approaches")]
    pub approaches: Vec<ViewKind>,
    #[serde(default = "default_components")]
    pub max_components: usize,
    #[serde(default = "default_detrend")]
    pub detrend: Vec<bool>,
    #[serde(default)]
    pub detrend_config: DetrendConfig,
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub tuning: TuningConfig,
    #[serde(default)]
    pub cv_bench: Option<CvBenchConfig>,
    #[serde(default)]
    pub importance: Option<ImportanceConfig>,
    #[serde(default)]
    pub occlusion: Option<OcclusionConfig>,
    #[serde(default = "default_metric_options")]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.models.is_empty() {
            return bad("at least one model is required".into());
        }
        if self.approaches.is_empty() || self.detrend.is_empty() {
            return bad("approaches and detrend must not be empty".into());
        }
        if !(self.split.train_end < self.split.val_end && self.split.val_end < self.split.test_end) {
            return bad("split window ends must be increasing".into());
        }
        for m in &self.models {
            m.base_spec(0).validate().map_err(|e| Error::InvalidConfig(format!("{}: {e}", m.label())))?;
            m.space().validate_for(m.family).map_err(|e| Error::InvalidConfig(format!("{}: {e}", m.label())))?;
            if !self.approaches.iter().any(|&a| m.family.accepts(a)) {
                return bad(format!("{} cannot use any configured approach", m.label()));
            }
        }
        let labels: Vec<String> = self.models.iter().map(ModelConfig::label).collect();
        if labels.iter().enumerate().any(|(i, l)| labels[..i].contains(l)) {
            return bad("model labels must be unique".into());
        }
        self.tuning.scheme.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if self.tuning.n_trials == 0 {
            return bad("tuning.n_trials must be positive".into());
        }
        check_hpo(&self.tuning.hpo)?;
        if let Some(cv) = &self.cv_bench {
            if cv.schemes.is_empty() || cv.hpo.is_empty() || cv.n_trials == 0 {
                return bad("cv_bench needs schemes, hpo algorithms and a positive n_trials".into());
            }
            for s in cv.schemes.iter().chain(&cv.size_scheme) {
                s.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
            cv.hpo.iter().try_for_each(check_hpo)?;
            if cv.sizes.windows(2).any(|w| w[0] >= w[1]) || cv.sizes.first() == Some(&0) {
                return bad("cv_bench.sizes must be positive and strictly ascending".into());
            }
        }
        if let Some(mi) = &self.mi {
            if !(0.0..=1.0).contains(&mi.threshold) || mi.k == 0 {
                return bad("mi.threshold must lie in [0, 1] and mi.k be positive".into());
            }
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        if self.max_components == 0 {
            return bad("max_components must be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&serde_json::to_value(self).expect("config serializes")).expect("json");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `<name>-<first 12 hex digits of the hash>`.
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.name, &self.hash()[..12])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_id())
    }
}

fn check_hpo(h: &HpoAlgo) -> Result<()> {
    if let HpoAlgo::Bayesian { config: BayesConfig { n_candidates, batch, .. } } = h {
        if *n_candidates == 0 || *batch == 0 {
            return Err(Error::InvalidConfig("bayesian n_candidates and batch must be positive".into()));
        }
    }
    Ok(())
}
