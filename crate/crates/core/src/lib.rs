//! Forecasting toolkit for daily national solar and wind power from
//! capacity-weighted gridded weather.
//!
//! The crate is organised bottom-up:
//!
//! * [`gridstore`]: grids, series, facility registries and their file formats
//! * [`ingest`]: capacity weighting, temporal features, variable selection
//! * [`features`]: model-ready dataset views, STL detrending, PCA, splits
//! * [`models`]: the model zoo behind one fit/predict interface
//! * [`crossval`]: split schemes, generalization-error estimates, the
//!   estimate-vs-actual error experiment and dataset-size sweeps
//! * [`hpo`]: random search and Gaussian-process Bayesian search
//! * [`eval`]: metrics, permutation importance, occlusion maps
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossval;
pub mod eval;
pub mod features;
pub mod gridstore;
pub mod hpo;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod par;
pub mod rng;

pub use gridstore::{FacilityRecord, FacilityRegistry, GridSpec, GridStack, Sector, Series, TimeAxis};
