//! Orchestration on top of `gridcast-core`: experiment configs, synthetic
//! datasets, the staged pipeline behind the `gridcast` binary and report
//! rendering.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod synth;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use pipeline::{run_benchmark, BenchmarkOutcome};
pub use synth::{synth_generate, SynthSpec};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
    #[error(transparent)]
    Grid(#[from] gridcast_core::gridstore::GridError),
    #[error(transparent)]
    Ingest(#[from] gridcast_core::ingest::IngestError),
    #[error(transparent)]
    Features(#[from] gridcast_core::features::FeaturesError),
    #[error(transparent)]
    Model(#[from] gridcast_core::models::ModelError),
    #[error(transparent)]
    Crossval(#[from] gridcast_core::crossval::CrossvalError),
    #[error(transparent)]
    Eval(#[from] gridcast_core::eval::EvalError),
}

impl Error {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io(format!("{}: {e}", path.display()))
}
