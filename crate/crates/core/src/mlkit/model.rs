use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{
    CdOptions, FeatureMatrix, ForestParams, LassoModel, LogisticModel, MlError, RandomForest,
    Result, Target,
};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// L1-regularized linear model (logistic one-vs-rest for classification).
    LassoLinear,
    RandomForest,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lasso" | "lasso_linear" | "linear" => Ok(Self::LassoLinear),
            "random_forest" | "forest" | "rf" => Ok(Self::RandomForest),
            other => Err(format!("unknown model kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub lambda: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub forest: ForestParams,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            tol: 1e-6,
            max_sweeps: 10_000,
            forest: ForestParams::default(),
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(MlError::InvalidHyperparameter(format!(
                "lambda {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) {
            return Err(MlError::InvalidHyperparameter(format!("tol {}", self.tol)));
        }
        if self.max_sweeps == 0 || self.forest.n_trees == 0 {
            return Err(MlError::InvalidHyperparameter(
                "sweeps and trees must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn cd<T: Scalar>(&self) -> CdOptions<T> {
        CdOptions {
            lambda: T::of(self.lambda),
            tol: T::of(self.tol),
            max_sweeps: self.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted<T> {
    Lasso(LassoModel<T>),
    Logistic(LogisticModel<T>),
    Forest(RandomForest<T>),
    /// Fallback when a training split cannot support a model.
    ConstantValue(T),
    ConstantClass(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub kind: ModelKind,
    pub seed: u64,
    pub fitted: Fitted<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction<T> {
    Values(Vec<T>),
    Classes(Vec<usize>),
}

impl<T: Scalar> Model<T> {
    /// Predicts the mean target, or the majority class (lowest index on ties).
    pub fn constant(kind: ModelKind, target: &Target<T>) -> Self {
        let fitted = match target {
            Target::Regression(y) => {
                let n = T::of_usize(y.len().max(1));
                Fitted::ConstantValue(y.iter().copied().sum::<T>() / n)
            }
            Target::Classification { labels, classes } => {
                let mut counts = vec![0usize; classes.len().max(1)];
                for &l in labels {
                    counts[l] += 1;
                }
                let best = (0..counts.len())
                    .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
                    .unwrap_or(0);
                Fitted::ConstantClass(best)
            }
        };
        Self {
            kind,
            seed: 0,
            fitted,
        }
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Prediction<T> {
        match &self.fitted {
            Fitted::Lasso(m) => Prediction::Values(m.predict(x)),
            Fitted::Logistic(m) => Prediction::Classes(m.predict(x)),
            Fitted::Forest(f) => match f.task {
                super::forest::ForestTask::Regression => Prediction::Values(f.predict_values(x)),
                super::forest::ForestTask::Classification { .. } => {
                    Prediction::Classes(f.predict_classes(x))
                }
            },
            Fitted::ConstantValue(v) => Prediction::Values(vec![*v; x.nrows()]),
            Fitted::ConstantClass(c) => Prediction::Classes(vec![*c; x.nrows()]),
        }
    }
}

/// Trains `kind` on `x`. Classification needs two distinct labels.
pub fn train<T: Scalar>(
    x: &FeatureMatrix<T>,
    kind: ModelKind,
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<Model<T>> {
    hyper.validate()?;
    if x.num_rows() < 2 {
        return Err(MlError::TooFewRows {
            needed: 2,
            got: x.num_rows(),
        });
    }
    let fitted = match (&x.target, kind) {
        (Target::Regression(y), ModelKind::LassoLinear) => {
            Fitted::Lasso(LassoModel::fit(x.values.view(), y, &hyper.cd()))
        }
        (Target::Regression(y), ModelKind::RandomForest) => Fitted::Forest(
            RandomForest::fit_regression(x.values.view(), y, &hyper.forest, seed),
        ),
        (Target::Classification { labels, classes }, kind) => {
            let first = labels[0];
            if labels.iter().all(|&l| l == first) {
                return Err(MlError::DegenerateTarget(
                    "training split holds a single class".into(),
                ));
            }
            match kind {
                ModelKind::LassoLinear => Fitted::Logistic(LogisticModel::fit(
                    x.values.view(),
                    labels,
                    classes.len(),
                    &hyper.cd(),
                )),
                ModelKind::RandomForest => Fitted::Forest(RandomForest::fit_classification(
                    x.values.view(),
                    labels,
                    classes.len(),
                    &hyper.forest,
                    seed,
                )),
            }
        }
    };
    Ok(Model { kind, seed, fitted })
}
