mod common;

use gridcast_core::eval::{self, ErrorMetric, EvalError, OcclusionConfig};
use gridcast_core::features::build_image_view;
use gridcast_core::ingest::{FeatureColumn, FeatureKind};
use gridcast_core::models::{self, Family, Learned, ModelSpec};
use gridcast_core::{GridSpec, GridStack, Series, TimeAxis};
use ndarray::{Array2, Array3};

fn naive(y: &[f64], p: &[f64]) -> [f64; 5] {
    let n = y.len() as f64;
    let (mut abs, mut pct, mut sq, mut mean) = (0.0, 0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (y[0], y[0]);
    for i in 0..y.len() {
        abs += (y[i] - p[i]).abs();
        pct += ((y[i] - p[i]) / y[i]).abs();
        sq += (y[i] - p[i]) * (y[i] - p[i]);
        mean += y[i];
        lo = lo.min(y[i]);
        hi = hi.max(y[i]);
    }
    mean /= n;
    let mut tot = 0.0;
    for v in y {
        tot += (v - mean) * (v - mean);
    }
    let rmse = (sq / n).sqrt();
    [abs / n, 100.0 * pct / n, rmse, 100.0 * rmse / (hi - lo), 1.0 - sq / tot]
}

#[test]
fn metrics_match_loop_oracle() {
    for k in 0..1000u64 {
        let n = 2 + (k as usize % 50);
        let y: Vec<f64> = common::normals(k, n).iter().map(|v| 100.0 + 30.0 * v).collect();
        let p: Vec<f64> = common::normals(k + 5000, n).iter().zip(&y).map(|(e, v)| v + 10.0 * e).collect();
        let m = eval::metrics(&y, &p).unwrap();
        let o = naive(&y, &p);
        for (a, b) in [m.mae, m.mape, m.rmse, m.nrmse, m.r2].iter().zip(o) {
            assert!((a - b).abs() <= 1e-10, "{k}: {a} vs {b}");
        }
    }
}

#[test]
fn mean_predictor_has_zero_r2() {
    let y = [3.0, 7.0, 1.0, 9.0];
    let m = y.iter().sum::<f64>() / 4.0;
    assert_eq!(eval::r2(&y, &[m; 4]).unwrap(), 0.0);
    assert!(eval::r2(&y, &[100.0; 4]).unwrap() <= 1.0);
}

fn linear_fixture() -> (gridcast_core::features::DatasetView, Vec<usize>) {
    let n = 300;
    let a = common::normals(1, n);
    let b = common::normals(2, n);
    let x = Array2::from_shape_fn((n, 3), |(i, j)| match j {
        0 => a[i],
        1 => b[i],
        _ => a[i],
    });
    let y: Vec<f64> = (0..n).map(|i| 2.0 * a[i] + 0.0 * b[i]).collect();
    (common::tab_view(x, y), (0..n).collect())
}

#[test]
fn permutation_importance_cases() {
    let n = 200;
    let a = common::normals(11, n);
    let b = common::normals(12, n);
    let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { a[i] } else { b[i] });
    let y: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    let view = common::tab_view(x, y);
    let rows: Vec<usize> = (0..n).collect();
    let m = models::fit(&ModelSpec::new(Family::Linear, 0), &view, &rows).unwrap();
    let imp = eval::permutation_importance(&m, &view, &rows, ErrorMetric::Rmse, 8, 3).unwrap();
    assert!(imp.features[0].repeats.iter().all(|&v| v > 0.0));
    let noise = &imp.features[1];
    assert!(noise.mean.abs() <= 2.0 * noise.std + 1e-9, "{noise:?}");
    assert_eq!(imp.ranking()[0], 0);
    let again = eval::permutation_importance(&m, &view, &rows, ErrorMetric::Rmse, 8, 3).unwrap();
    assert_eq!(imp, again);
    assert!(matches!(
        eval::permutation_importance(&m, &view, &rows[..1], ErrorMetric::Rmse, 2, 0),
        Err(EvalError::SingleRow)
    ));
}

#[test]
fn duplicated_columns_mask_each_other() {
    let (dup_view, rows) = linear_fixture();
    let m = models::fit(&ModelSpec::new(Family::Linear, 0), &dup_view, &rows).unwrap();
    let dup = eval::permutation_importance(&m, &dup_view, &rows, ErrorMetric::Rmse, 10, 4).unwrap();

    let n = rows.len();
    let x1 = Array2::from_shape_fn((n, 2), |(i, j)| dup_view.x_tab[[i, j]]);
    let single_view = common::tab_view(x1, dup_view.y.values.clone());
    let m1 = models::fit(&ModelSpec::new(Family::Linear, 0), &single_view, &rows).unwrap();
    let single = eval::permutation_importance(&m1, &single_view, &rows, ErrorMetric::Rmse, 10, 4).unwrap();
    let tol = 2.0 * single.features[0].std;
    assert!(dup.features[0].mean <= single.features[0].mean + tol);
    assert!(dup.features[2].mean <= single.features[0].mean + tol);
}

fn image_fixture(nlat: usize, nlon: usize, n: usize) -> gridcast_core::features::DatasetView {
    let spec = GridSpec::new(45.0, 0.25, nlat, 2.0, 0.25, nlon).unwrap();
    let time = TimeAxis::daily(common::start(), n);
    let z = common::normals(21, n * nlat * nlon);
    let values = Array3::from_shape_fn((n, nlat, nlon), |(t, i, j)| z[(t * nlat + i) * nlon + j] as f32);
    let stack = GridStack::new(spec, time, "w_t2m", "K", values).unwrap();
    let y: Vec<f64> = (0..n).map(|t| stack.values.index_axis(ndarray::Axis(0), t).sum() as f64).collect();
    let scalar = FeatureColumn { kind: FeatureKind::TimeIndex, series: Series::new(time, "time_index", "", (0..n).map(|t| t as f64).collect()) };
    build_image_view(&[stack], &[scalar], &Series::new(time, "power_mw", "MW", y)).unwrap()
}

#[test]
fn occlusion_of_linear_cnn_matches_input_gradient() {
    let view = image_fixture(10, 10, 40);
    let rows: Vec<usize> = (0..40).collect();
    let spec = ModelSpec::new(Family::Cnn, 5)
        .with_text("activation", "identity")
        .with_text("pool", "avg")
        .with_int("conv1_channels", 2)
        .with_int("conv2_channels", 3)
        .with_int("dense_units", 4)
        .with_int("epochs", 2);
    let m = models::fit(&spec, &view, &rows).unwrap();
    let Learned::Cnn(cnn) = &m.learned else { unreachable!() };

    let mut one = view.clone();
    let img = one.x_img.as_mut().unwrap();
    img.index_axis_mut(ndarray::Axis(0), 0).fill(0.0);
    let (ci, cj, xv) = (4, 6, 2.5f32);
    img[[0, 0, ci, cj]] = xv;

    let sample = vec![-cnn.channel_mean[0] / cnn.channel_std[0]; 100];
    let scalars: Vec<f64> = (0..cnn.scalar_mean.len()).map(|j| (one.x_tab[[0, j]] - cnn.scalar_mean[j]) / cnn.scalar_std[j]).collect();
    let mut grad = vec![0.0; cnn.arch.n_params()];
    let (_, dimg) = cnn.arch.backward(&cnn.params, &sample, &scalars, 1.0, &mut grad, true);
    let w_raw = cnn.y_std * dimg.unwrap()[ci * 10 + cj] / cnn.channel_std[0];
    let expected = (w_raw * xv as f64).abs();

    let map = eval::occlusion_map(&m, &one, 0, &OcclusionConfig::default()).unwrap();
    assert_eq!(map.values.dim(), (10, 10));
    assert!((map.values[[ci, cj]] - expected).abs() <= 1e-6 * (1.0 + expected), "{} vs {expected}", map.values[[ci, cj]]);
    assert!(map.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn occlusion_bookkeeping() {
    let view = image_fixture(6, 6, 30);
    let rows: Vec<usize> = (0..30).collect();
    let spec = ModelSpec::new(Family::Cnn, 1).with_int("epochs", 1).with_int("conv1_channels", 2).with_int("conv2_channels", 2).with_int("dense_units", 2);
    let mut m = models::fit(&spec, &view, &rows).unwrap();
    let cfg = OcclusionConfig { patch: 3, stride: 3, baseline: 0.0 };
    let tiled = eval::occlusion_map(&m, &view, 3, &cfg).unwrap();
    for bi in 0..2 {
        for bj in 0..2 {
            let block = tiled.values.slice(ndarray::s![bi * 3..bi * 3 + 3, bj * 3..bj * 3 + 3]);
            assert!(block.iter().all(|&v| v == block[[0, 0]]));
        }
    }
    assert!(matches!(
        eval::occlusion_map(&m, &view, 0, &OcclusionConfig { patch: 7, stride: 1, baseline: 0.0 }),
        Err(EvalError::PatchTooLarge { .. })
    ));

    let Learned::Cnn(cnn) = &mut m.learned else { unreachable!() };
    let n = cnn.params.len();
    cnn.params[..n - 1].iter_mut().for_each(|p| *p = 0.0);
    let flat = eval::occlusion_map(&m, &view, 3, &OcclusionConfig::default()).unwrap();
    assert!(flat.values.iter().all(|&v| v == 0.0));
}
