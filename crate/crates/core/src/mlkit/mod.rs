//! Stage 4: vectorization, feature selection, model training, k-fold
//! evaluation, metrics, feature importance and record-level diffs.

mod cv;
mod diffs;
mod forest;
mod fvalue;
mod importance;
mod lasso;
mod logistic;
mod matrix;
mod metrics;
mod model;
mod select;
mod vectorize;

pub use cv::{
    cross_validate, fold_assignments, EvalConfig, EvalOutcome, EvalReport, FeatureSelection,
    ModelChoice, Predictions,
};
pub use diffs::{record_diffs, DiffFilter, DiffFlag, RecordDiff};
pub use forest::{DecisionTree, ForestParams, ForestTask, RandomForest, TreeNode};
pub use fvalue::f_value_scores;
pub use importance::{feature_importance, FeatureImportance, ImportanceReport};
pub use lasso::{coordinate_descent, soft_threshold, CdOptions, CdSolution, LassoModel};
pub use logistic::LogisticModel;
pub use matrix::{FeatureMatrix, Origin, Target};
pub use metrics::{macro_f1, mse, rmse, Metric};
pub use model::{train, Fitted, Hyperparameters, Model, ModelKind, Prediction};
pub use select::{select_features, SelectionMethod};
pub use vectorize::{vectorize, VectorizeOptions, VectorizeScheme, Vectorizer};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("no usable features")]
    NoFeatures,
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),
    #[error("invalid target value {value:?} in row {row}")]
    InvalidTarget { row: usize, value: String },
    #[error("target count {count} outside 1..={available}")]
    InvalidCount { count: usize, available: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("record diffs are only defined for classification")]
    UnsupportedTask,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

pub type Result<T, E = MlError> = std::result::Result<T, E>;
