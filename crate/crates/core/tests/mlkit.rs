use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tablelift_core::mlkit::{
    select_features, train, CdOptions, FeatureMatrix, ForestParams, Hyperparameters, LassoModel,
    ModelKind, Prediction, RandomForest, SelectionMethod, Target, TreeNode,
};

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0))
}

type Pairs = Vec<(f64, f64)>;

/// Best single split by squared-error reduction, found by trying every
/// feature and every midpoint between consecutive distinct values.
fn best_stump(x: &Array2<f64>, y: &[f64]) -> (usize, f64, f64, f64) {
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let mut best = (usize::MAX, 0.0, f64::INFINITY, 0.0, 0.0);
    for j in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(j).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Pairs, Pairs) = (0..y.len())
                .map(|i| (x[[i, j]], y[i]))
                .partition(|(v, _)| *v <= t);
            let l: Vec<f64> = l.into_iter().map(|(_, y)| y).collect();
            let r: Vec<f64> = r.into_iter().map(|(_, y)| y).collect();
            let total = sse(&l) + sse(&r);
            if total < best.2 {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                best = (j, t, total, mean(&l), mean(&r));
            }
        }
    }
    (best.0, best.1, best.3, best.4)
}

#[test]
fn depth_one_tree_matches_exhaustive_stump() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let x = random_matrix(&mut rng, 40, 4);
        let y: Vec<f64> = (0..40)
            .map(|i| if x[[i, case % 4]] > 0.1 { 3.0 } else { -1.0 } + rng.random_range(-0.5..0.5))
            .collect();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_depth: Some(1),
            max_features: Some(4),
            ..Default::default()
        };
        let forest = RandomForest::fit_regression(x.view(), &y, &params, case as u64);
        let (feature, threshold, left_mean, right_mean) = best_stump(&x, &y);
        let split = forest.trees[0]
            .nodes
            .iter()
            .find_map(|n| match n {
                TreeNode::Split {
                    feature, threshold, ..
                } => Some((*feature, *threshold)),
                TreeNode::Leaf { .. } => None,
            })
            .expect("root split");
        assert_eq!(split.0, feature, "case {case}");
        assert!((split.1 - threshold).abs() < 1e-12, "case {case}");
        for (i, pred) in forest.predict_values(x.view()).into_iter().enumerate() {
            let want = if x[[i, feature]] <= threshold {
                left_mean
            } else {
                right_mean
            };
            assert!((pred - want).abs() < 1e-9);
        }
    }
}

#[test]
fn lasso_single_and_double_precision_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_matrix(&mut rng, 60, 5);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 2.0 * r[0] - r[3] + 0.5)
        .collect();
    let opts = CdOptions::default();
    let wide = LassoModel::fit(x.view(), &y, &opts);
    let xs = x.mapv(|v| v as f32);
    let ys: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let narrow = LassoModel::<f32>::fit(xs.view(), &ys, &CdOptions::default());
    for (a, b) in wide.weights.iter().zip(&narrow.weights) {
        assert!((a - *b as f64).abs() < 1e-3, "{a} vs {b}");
    }
    assert!((wide.weights[0] - 2.0).abs() < 0.05);
    assert!(wide.weights[1].abs() < 0.05);
}

#[test]
fn lasso_shrinks_then_zeroes_as_lambda_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 80, 3);
    let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] + 0.1 * r[1]).collect();
    let norm = |lambda: f64| {
        let opts = CdOptions {
            lambda,
            ..Default::default()
        };
        LassoModel::fit(x.view(), &y, &opts)
            .standardized_weights
            .iter()
            .map(|w| w.abs())
            .sum::<f64>()
    };
    let norms: Vec<f64> = [0.0, 0.01, 0.1, 0.3, 10.0].into_iter().map(norm).collect();
    assert!(norms.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{norms:?}");
    assert_eq!(norms[4], 0.0);
}

fn classification_matrix(rng: &mut ChaCha8Rng) -> FeatureMatrix<f64> {
    let x = random_matrix(rng, 90, 3);
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| {
            if r[1] < -0.3 {
                0
            } else if r[1] < 0.3 {
                1
            } else {
                2
            }
        })
        .collect();
    FeatureMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        x,
        Target::Classification {
            labels,
            classes: vec!["low".into(), "mid".into(), "high".into()],
        },
    )
}

#[test]
fn both_model_kinds_learn_three_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = classification_matrix(&mut rng);
    let Target::Classification { labels, .. } = &data.target else {
        unreachable!()
    };
    for kind in [ModelKind::LassoLinear, ModelKind::RandomForest] {
        let model = train(&data, kind, &Hyperparameters::default(), 1).unwrap();
        let Prediction::Classes(pred) = model.predict(data.values.view()) else {
            panic!("classes expected")
        };
        let accuracy =
            pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
        assert!(accuracy > 0.85, "{kind:?}: {accuracy}");
    }
}

#[test]
fn every_selector_keeps_the_informative_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = classification_matrix(&mut rng);
    for method in [
        SelectionMethod::FValue,
        SelectionMethod::Forward,
        SelectionMethod::Backward,
        SelectionMethod::Rfe,
        SelectionMethod::RfImportance,
    ] {
        let kept = select_features(&data, method, 1, &Hyperparameters::default(), 3).unwrap();
        assert_eq!(kept, vec![1], "{method:?}");
    }
}
