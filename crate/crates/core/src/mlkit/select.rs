use serde::{Deserialize, Serialize};

use super::cv::fold_assignments;
use super::{
    f_value_scores, macro_f1, mse, train, FeatureMatrix, Fitted, Hyperparameters, MlError, Model,
    ModelKind, Prediction, RandomForest, Result, Target,
};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    FValue,
    Forward,
    Backward,
    Rfe,
    RfImportance,
    L1,
}

impl std::str::FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "f_value" | "fvalue" => Ok(Self::FValue),
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            "rfe" => Ok(Self::Rfe),
            "rf_importance" => Ok(Self::RfImportance),
            "l1" => Ok(Self::L1),
            other => Err(format!("unknown selection method '{other}'")),
        }
    }
}

/// Indices `0..p` ordered by descending score, ties to the lower index.
fn rank_desc<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Loss of the linear base model on a 2-fold split restricted to `features`.
fn holdout_loss<T: Scalar>(
    x: &FeatureMatrix<T>,
    features: &[usize],
    folds: &[usize],
    hyper: &Hyperparameters,
) -> f64 {
    let sub = x.select_features(features);
    let mut loss = 0.0;
    for fold in 0..2 {
        let train_rows: Vec<usize> = (0..x.num_rows()).filter(|&r| folds[r] != fold).collect();
        let test_rows: Vec<usize> = (0..x.num_rows()).filter(|&r| folds[r] == fold).collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            continue;
        }
        let tr = sub.select_rows(&train_rows);
        let te = sub.select_rows(&test_rows);
        let model = train(&tr, ModelKind::LassoLinear, hyper, 0)
            .unwrap_or_else(|_| Model::constant(ModelKind::LassoLinear, &tr.target));
        loss += match (model.predict(te.values.view()), &te.target) {
            (Prediction::Values(p), Target::Regression(y)) => mse(y, &p).as_f64(),
            (Prediction::Classes(p), Target::Classification { labels, .. }) => {
                1.0 - macro_f1(labels, &p)
            }
            _ => unreachable!("prediction kind follows the target"),
        };
    }
    loss
}

fn linear_magnitudes<T: Scalar>(model: &Model<T>, p: usize) -> Vec<T> {
    match &model.fitted {
        Fitted::Lasso(m) => m.standardized_weights.iter().map(|w| w.abs()).collect(),
        Fitted::Logistic(m) => (0..p)
            .map(|j| m.standardized_weights.iter().map(|w| w[j].abs()).sum())
            .collect(),
        _ => vec![T::zero(); p],
    }
}

/// Chooses `count` feature indices (ascending). `l1` may return fewer when
/// fewer coefficients survive the penalty.
pub fn select_features<T: Scalar>(
    x: &FeatureMatrix<T>,
    method: SelectionMethod,
    count: usize,
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<Vec<usize>> {
    let p = x.num_features();
    if count == 0 || count > p {
        return Err(MlError::InvalidCount {
            count,
            available: p,
        });
    }
    if count == p {
        return Ok((0..p).collect());
    }
    let mut chosen = match method {
        SelectionMethod::FValue => {
            let mut r = rank_desc(&f_value_scores(x)?);
            r.truncate(count);
            r
        }
        SelectionMethod::RfImportance => {
            let forest = match &x.target {
                Target::Regression(y) => {
                    RandomForest::fit_regression(x.values.view(), y, &hyper.forest, seed)
                }
                Target::Classification { labels, classes } => RandomForest::fit_classification(
                    x.values.view(),
                    labels,
                    classes.len(),
                    &hyper.forest,
                    seed,
                ),
            };
            let mut r = rank_desc(&forest.importances);
            r.truncate(count);
            r
        }
        SelectionMethod::L1 => {
            let model = train(x, ModelKind::LassoLinear, hyper, seed)?;
            let mags = linear_magnitudes(&model, p);
            rank_desc(&mags)
                .into_iter()
                .filter(|&j| mags[j] > T::zero())
                .take(count)
                .collect()
        }
        SelectionMethod::Rfe => {
            let mut remaining: Vec<usize> = (0..p).collect();
            while remaining.len() > count {
                let sub = x.select_features(&remaining);
                let model = train(&sub, ModelKind::LassoLinear, hyper, seed)?;
                let mags = linear_magnitudes(&model, remaining.len());
                let weakest = (0..remaining.len())
                    .min_by(|&a, &b| {
                        mags[a]
                            .partial_cmp(&mags[b])
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then(b.cmp(&a))
                    })
                    .expect("nonempty");
                remaining.remove(weakest);
            }
            remaining
        }
        SelectionMethod::Forward | SelectionMethod::Backward => {
            if x.num_rows() < 4 {
                return Err(MlError::TooFewRows {
                    needed: 4,
                    got: x.num_rows(),
                });
            }
            let folds = fold_assignments(&x.target, 2, seed);
            if method == SelectionMethod::Forward {
                let mut selected: Vec<usize> = Vec::new();
                while selected.len() < count {
                    let best = (0..p)
                        .filter(|j| !selected.contains(j))
                        .map(|j| {
                            let mut trial = selected.clone();
                            trial.push(j);
                            trial.sort_unstable();
                            (holdout_loss(x, &trial, &folds, hyper), j)
                        })
                        .min_by(|a, b| {
                            a.0.partial_cmp(&b.0)
                                .unwrap_or(std::cmp::Ordering::Equal)
                                .then(a.1.cmp(&b.1))
                        })
                        .expect("candidates remain");
                    selected.push(best.1);
                }
                selected
            } else {
                let mut remaining: Vec<usize> = (0..p).collect();
                while remaining.len() > count {
                    let best = (0..remaining.len())
                        .map(|i| {
                            let mut trial = remaining.clone();
                            trial.remove(i);
                            (holdout_loss(x, &trial, &folds, hyper), i)
                        })
                        .min_by(|a, b| {
                            a.0.partial_cmp(&b.0)
                                .unwrap_or(std::cmp::Ordering::Equal)
                                .then(a.1.cmp(&b.1))
                        })
                        .expect("features remain");
                    remaining.remove(best.1);
                }
                remaining
            }
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn regression(p: usize, n: usize) -> FeatureMatrix<f64> {
        let values = Array2::from_shape_fn((n, p), |(i, j)| {
            (((i + 1) * (j * 7 + 3)) % 11) as f64 + 0.1 * j as f64
        });
        let y: Vec<f64> = (0..n).map(|i| 3.0 * values[[i, 1]] + 0.5).collect();
        let names = (0..p).map(|j| format!("f{j}")).collect();
        FeatureMatrix::new(names, values, Target::Regression(y))
    }

    #[test]
    fn full_count_is_identity() {
        let x = regression(4, 20);
        for m in [
            SelectionMethod::FValue,
            SelectionMethod::Forward,
            SelectionMethod::Backward,
            SelectionMethod::Rfe,
            SelectionMethod::RfImportance,
            SelectionMethod::L1,
        ] {
            assert_eq!(
                select_features(&x, m, 4, &Hyperparameters::default(), 0).unwrap(),
                vec![0, 1, 2, 3]
            );
        }
    }

    #[test]
    fn every_method_finds_the_driver() {
        let x = regression(4, 24);
        for m in [
            SelectionMethod::FValue,
            SelectionMethod::Forward,
            SelectionMethod::Backward,
            SelectionMethod::Rfe,
            SelectionMethod::RfImportance,
            SelectionMethod::L1,
        ] {
            assert_eq!(
                select_features(&x, m, 1, &Hyperparameters::default(), 5).unwrap(),
                vec![1],
                "{m:?}"
            );
        }
    }

    #[test]
    fn counts_validated() {
        let x = regression(3, 10);
        assert!(matches!(
            select_features(
                &x,
                SelectionMethod::FValue,
                0,
                &Hyperparameters::default(),
                0
            ),
            Err(MlError::InvalidCount {
                count: 0,
                available: 3
            })
        ));
        assert!(select_features(
            &x,
            SelectionMethod::FValue,
            4,
            &Hyperparameters::default(),
            0
        )
        .is_err());
    }

    #[test]
    fn exact_subset_size_and_determinism() {
        let x = regression(6, 30);
        let a = select_features(
            &x,
            SelectionMethod::RfImportance,
            3,
            &Hyperparameters::default(),
            2,
        )
        .unwrap();
        let b = select_features(
            &x,
            SelectionMethod::RfImportance,
            3,
            &Hyperparameters::default(),
            2,
        )
        .unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }
}
