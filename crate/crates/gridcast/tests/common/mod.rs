#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use gridcast::config::ExperimentConfig;
use gridcast::{synth_generate, SynthSpec};
use serde_json::{json, Value};

/// 800 days from 2012-01-01.
pub fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec { n_days: 800, seed, ..SynthSpec::default() }
}

pub fn synth_into(spec: &SynthSpec, dir: &Path) -> PathBuf {
    let d = dir.join("data");
    synth_generate(spec, &d).unwrap();
    d
}

/// Config over a `small_spec` dataset: one linear model, no CV comparison.
pub fn base_config(data: &Path, out: &Path) -> Value {
    json!({
        "name": "t",
        "sector": "solar",
        "data_dir": data,
        "out_dir": out,
        "split": {"train_end": "2013-06-30", "val_end": "2013-10-31", "test_end": "2014-03-10"},
        "models": [{"family": "linear"}],
        "tuning": {"scheme": {"scheme": "expanding", "k": 3}, "hpo": {"algorithm": "random"}, "n_trials": 2},
        "seed": 3
    })
}

pub fn config(v: &Value) -> ExperimentConfig {
    ExperimentConfig::from_json(&v.to_string()).unwrap()
}

/// Relative paths of every file under `root`, sorted.
pub fn files(root: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut v = Vec::new();
    walk(root, root, &mut v);
    v.sort();
    v
}
