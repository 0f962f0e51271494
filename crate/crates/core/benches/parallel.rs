//! Forest fitting and k-fold estimation on one worker versus all workers.
//!
//! With the default `parallel` feature both variants run on rayon pools of
//! different sizes. `cargo bench --no-default-features` runs the plain
//! iterator fallback instead; comparing the two reports shows the overhead
//! of the pool itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gridcast_core::crossval::{estimate_generalization_error, make_splits, Scheme, SchemeParams};
use gridcast_core::features::{DatasetView, ViewKind};
use gridcast_core::models::{self, Family, ModelSpec};
use gridcast_core::{par, Series, TimeAxis};
use ndarray::Array2;

fn view(n: usize, p: usize) -> DatasetView {
    let x = Array2::from_shape_fn((n, p), |(i, j)| ((i * 31 + j * 17) % 97) as f64 / 97.0 + (i as f64 * 0.01).sin());
    let y = (0..n).map(|i| x[[i, 0]] * 3.0 - x[[i, 1]] + x[[i, 2 % p]].powi(2)).collect();
    DatasetView {
        kind: ViewKind::Average,
        x_tab: x,
        x_img: None,
        y: Series::new(TimeAxis::daily(chrono::NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(), n), "y", "MW", y),
        feature_names: (0..p).map(|j| format!("x{j}")).collect(),
        channel_names: vec![],
        weather_columns: p,
        trends: vec![],
        target_trend: None,
        pca: None,
    }
}

fn pools() -> Vec<(String, usize)> {
    let all = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut v = vec![("serial".to_string(), 1)];
    if par::is_parallel() {
        v.push((format!("threads-{all}"), all));
    }
    v
}

#[cfg(feature = "parallel")]
fn run_on<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

#[cfg(not(feature = "parallel"))]
fn run_on<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn bench_forest(c: &mut Criterion) {
    let v = view(1500, 8);
    let rows: Vec<usize> = (0..v.n_rows()).collect();
    let spec = ModelSpec::new(Family::Forest, 1).with_int("n_trees", 32).with_int("max_depth", 10);
    let mut g = c.benchmark_group("forest_fit");
    g.sample_size(10);
    for (label, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| run_on(threads, || models::fit(&spec, &v, &rows).expect("fit")))
        });
    }
    g.finish();
}

fn bench_cv(c: &mut Criterion) {
    let v = view(1500, 8);
    let plan = make_splits(v.n_rows(), &SchemeParams::new(Scheme::Kfold).with_k(5)).expect("plan");
    let spec = ModelSpec::new(Family::Forest, 1).with_int("n_trees", 16).with_int("max_depth", 8);
    let mut g = c.benchmark_group("kfold_estimate");
    g.sample_size(10);
    for (label, threads) in pools() {
        g.bench_function(BenchmarkId::from_parameter(&label), |b| {
            b.iter(|| run_on(threads, || estimate_generalization_error(&spec, &v, &plan).expect("cv")))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_forest, bench_cv);
criterion_main!(benches);
