mod common;

use common::{normals, start, tab_view};
use gridcast_core::features::{read_view, write_view, SplitSpec};
use gridcast_core::gridstore::{decode_gsf, encode_gsf};
use gridcast_core::models::{fit, load_model, save_model, Family, ModelSpec};
use gridcast_core::{GridSpec, GridStack, TimeAxis};
use ndarray::{Array2, Array3};

fn trending_view(n: usize) -> gridcast_core::features::DatasetView {
    let noise = normals(11, 2 * n);
    let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { i as f64 } else { noise[n + i] });
    let y = (0..n).map(|i| 0.5 * i as f64 + 3.0 * noise[n + i] + 0.1 * noise[i]).collect();
    tab_view(x, y)
}

#[test]
fn every_family_survives_save_and_load() {
    let view = trending_view(120);
    let rows: Vec<usize> = (0..120).collect();
    let dir = tempfile::tempdir().unwrap();
    for fam in Family::ALL.into_iter().filter(|f| *f != Family::Cnn) {
        let spec = match fam {
            Family::Mlp => ModelSpec::new(fam, 2).with_int("epochs", 10),
            Family::Forest | Family::LinearForest => ModelSpec::new(fam, 2).with_int("n_trees", 8),
            Family::Gbt | Family::LinearGbt => ModelSpec::new(fam, 2).with_int("n_rounds", 10),
            _ => ModelSpec::new(fam, 2),
        };
        let m = fit(&spec, &view, &rows).unwrap();
        let path = dir.path().join(fam.as_str());
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m, "{fam}");
        assert_eq!(back.predict(&view, &rows).unwrap(), m.predict(&view, &rows).unwrap(), "{fam}");
    }
}

#[test]
fn linear_leaves_extrapolate_a_trend_and_constant_leaves_do_not() {
    let view = trending_view(400);
    let train: Vec<usize> = (0..300).collect();
    let test: Vec<usize> = (300..400).collect();
    let ymax = view.target(&train).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let spec = |f| ModelSpec::new(f, 4).with_int("n_trees", 30).with_text("max_features", "all");
    let constant = fit(&spec(Family::Forest), &view, &train).unwrap().predict(&view, &test).unwrap();
    assert!(constant.iter().all(|p| *p <= ymax));
    let linear = fit(&spec(Family::LinearForest), &view, &train).unwrap().predict(&view, &test).unwrap();
    let y = view.target(&test);
    let rmse = |p: &[f64]| (p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    assert!(rmse(&linear) < 0.25 * rmse(&constant), "{} vs {}", rmse(&linear), rmse(&constant));
    assert!(linear.iter().any(|p| *p > ymax));
}

#[test]
fn grid_stacks_and_views_round_trip_through_files() {
    let spec = GridSpec::new(44.0, 0.5, 3, 1.0, 0.25, 4).unwrap();
    let vals = Array3::from_shape_fn((5, 3, 4), |(t, i, j)| (t * 100 + i * 10 + j) as f32 * 0.5);
    let stack = GridStack::new(spec, TimeAxis::daily(start(), 5), "t2m", "K", vals).unwrap();
    assert_eq!(decode_gsf(&encode_gsf(&stack).unwrap()).unwrap(), stack);

    let view = trending_view(50);
    let dir = tempfile::tempdir().unwrap();
    let split = SplitSpec::default();
    write_view(&view, Some(&spec), Some(&split), dir.path()).unwrap();
    let (back, s) = read_view(dir.path()).unwrap();
    assert_eq!(back.x_tab, view.x_tab);
    assert_eq!(back.y, view.y);
    assert_eq!(back.feature_names, view.feature_names);
    assert_eq!(s, Some(split));
}
