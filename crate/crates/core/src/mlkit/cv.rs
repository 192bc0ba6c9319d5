use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vectorize::parse_target;
use super::{
    feature_importance, macro_f1, mse, select_features, train, FeatureMatrix, Hyperparameters,
    ImportanceReport, Metric, MlError, Model, ModelKind, Prediction, Result, SelectionMethod,
    Target, VectorizeOptions, Vectorizer,
};
use crate::enrich::EnrichedTable;
use crate::tablecore::TaskKind;
use crate::textenc::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    LassoLinear,
    RandomForest,
    /// Evaluate both and keep the better mean score.
    BestOfBoth,
}

impl From<ModelKind> for ModelChoice {
    fn from(k: ModelKind) -> Self {
        match k {
            ModelKind::LassoLinear => ModelChoice::LassoLinear,
            ModelKind::RandomForest => ModelChoice::RandomForest,
        }
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "best" | "best_of_both" | "both" => Ok(Self::BestOfBoth),
            other => other.parse::<ModelKind>().map(Self::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub method: SelectionMethod,
    /// Clamped to the number of features available in each fold.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub model: ModelChoice,
    pub hyper: Hyperparameters,
    pub vectorize: VectorizeOptions,
    /// `None` keeps every feature.
    pub selection: Option<FeatureSelection>,
    /// Metric for regression tasks (MSE or RMSE); classification always uses macro-F1.
    pub regression_metric: Metric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 4,
            seed: 0,
            model: ModelChoice::default(),
            hyper: Hyperparameters::default(),
            vectorize: VectorizeOptions::default(),
            selection: None,
            regression_metric: Metric::Mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_kind: TaskKind,
    pub model: ModelKind,
    pub metric: Metric,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the fold scores.
    pub std: f64,
    pub wall_time_seconds: f64,
    /// Features produced by vectorizing the full table.
    pub feature_count: usize,
}

/// Out-of-fold predictions, one per query row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictions {
    Regression(Vec<f64>),
    Classification(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Predictions,
    /// From a model refit on every row.
    pub importance: ImportanceReport,
}

/// Fold id per row: a seeded shuffle dealt round-robin, stratified by class
/// for classification targets.
pub fn fold_assignments<T: crate::Scalar>(
    target: &Target<T>,
    folds: usize,
    seed: u64,
) -> Vec<usize> {
    let n = target.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match target {
        Target::Regression(_) => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            rows
        }
        Target::Classification { labels, classes } => {
            let mut out = Vec::with_capacity(n);
            for c in 0..classes.len() {
                let mut rows: Vec<usize> = (0..n).filter(|&r| labels[r] == c).collect();
                rows.shuffle(&mut rng);
                out.extend(rows);
            }
            out
        }
    };
    let mut assignment = vec![0; n];
    for (i, r) in order.into_iter().enumerate() {
        assignment[r] = i % folds;
    }
    assignment
}

fn mean_std(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = if scores.len() > 1 {
        (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

struct Fitted {
    model: Model<f64>,
    features: Vec<usize>,
    matrix: FeatureMatrix<f64>,
}

/// Vectorizes the training rows, applies feature selection and trains; falls
/// back to a constant model when the split has no usable features or classes.
fn fit_split(
    table: &EnrichedTable,
    rows: &[usize],
    kind: ModelKind,
    config: &EvalConfig,
    seed: u64,
) -> Result<(Option<Vectorizer>, Fitted)> {
    let target = parse_target::<f64>(table)?.select_rows(rows);
    let vectorizer = match Vectorizer::fit(table, rows, &config.vectorize) {
        Ok(v) => v,
        Err(MlError::NoFeatures) => {
            let matrix =
                FeatureMatrix::new(vec![], ndarray::Array2::zeros((rows.len(), 0)), target);
            let model = Model::constant(kind, &matrix.target);
            return Ok((
                None,
                Fitted {
                    model,
                    features: vec![],
                    matrix,
                },
            ));
        }
        Err(e) => return Err(e),
    };
    let full = vectorizer.transform::<f64>(table, rows)?;
    let features = match config.selection {
        Some(sel) => {
            let count = sel.count.min(full.num_features());
            match select_features(&full, sel.method, count, &config.hyper, seed) {
                Ok(f) => f,
                Err(MlError::DegenerateTarget(_)) | Err(MlError::TooFewRows { .. }) => {
                    (0..full.num_features()).collect()
                }
                Err(e) => return Err(e),
            }
        }
        None => (0..full.num_features()).collect(),
    };
    let matrix = full.select_features(&features);
    let model = if matrix.num_features() == 0 {
        Model::constant(kind, &matrix.target)
    } else {
        match train(&matrix, kind, &config.hyper, seed) {
            Ok(m) => m,
            Err(MlError::DegenerateTarget(_)) => Model::constant(kind, &matrix.target),
            Err(e) => return Err(e),
        }
    };
    Ok((
        Some(vectorizer),
        Fitted {
            model,
            features,
            matrix,
        },
    ))
}

fn evaluate_kind(
    table: &EnrichedTable,
    kind: ModelKind,
    config: &EvalConfig,
) -> Result<EvalOutcome> {
    let start = Instant::now();
    let n = table.num_rows();
    if config.folds < 2 || n < config.folds {
        return Err(MlError::TooFewRows {
            needed: config.folds.max(2),
            got: n,
        });
    }
    config.hyper.validate()?;
    let target = parse_target::<f64>(table)?;
    let assignment = fold_assignments(&target, config.folds, config.seed);
    let metric = match target {
        Target::Regression(_) => config.regression_metric,
        Target::Classification { .. } => Metric::MacroF1,
    };
    let fold_results: Vec<Result<FoldOutput>> = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let train_rows: Vec<usize> = (0..n).filter(|&r| assignment[r] != fold).collect();
            let test_rows: Vec<usize> = (0..n).filter(|&r| assignment[r] == fold).collect();
            let seed = mix64(config.seed ^ mix64(fold as u64 + 1));
            let (vectorizer, fitted) = fit_split(table, &train_rows, kind, config, seed)?;
            let test = match &vectorizer {
                Some(v) => v
                    .transform::<f64>(table, &test_rows)?
                    .select_features(&fitted.features),
                None => FeatureMatrix::new(
                    vec![],
                    ndarray::Array2::zeros((test_rows.len(), 0)),
                    target.select_rows(&test_rows),
                ),
            };
            let pred = fitted.model.predict(test.values.view());
            let score = match (&pred, &test.target) {
                (Prediction::Values(p), Target::Regression(y)) => {
                    let m = mse(y, p);
                    if metric == Metric::Rmse {
                        m.sqrt()
                    } else {
                        m
                    }
                }
                (Prediction::Classes(p), Target::Classification { labels, .. }) => {
                    macro_f1(labels, p)
                }
                _ => unreachable!("prediction kind follows the target"),
            };
            Ok((test_rows, pred, score))
        })
        .collect();

    let mut fold_scores = Vec::with_capacity(config.folds);
    let mut values = vec![0.0; n];
    let mut classes = vec![0usize; n];
    for r in fold_results {
        let (rows, pred, score) = r?;
        fold_scores.push(score);
        match pred {
            Prediction::Values(p) => rows.iter().zip(p).for_each(|(&r, v)| values[r] = v),
            Prediction::Classes(p) => rows.iter().zip(p).for_each(|(&r, c)| classes[r] = c),
        }
    }
    let predictions = match &target {
        Target::Regression(_) => Predictions::Regression(values),
        Target::Classification { classes: names, .. } => {
            Predictions::Classification(classes.iter().map(|&c| names[c].clone()).collect())
        }
    };
    let all: Vec<usize> = (0..n).collect();
    let (vectorizer, fitted) = fit_split(table, &all, kind, config, config.seed)?;
    let importance = feature_importance(&fitted.model, &fitted.matrix);
    let (mean, std) = mean_std(&fold_scores);
    Ok(EvalOutcome {
        report: EvalReport {
            task_kind: target.task_kind(),
            model: kind,
            metric,
            fold_scores,
            mean,
            std,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            feature_count: vectorizer.map_or(0, |v| v.num_features()),
        },
        predictions,
        importance,
    })
}

/// Test rows, their predictions and the fold score.
type FoldOutput = (Vec<usize>, Prediction<f64>, f64);

/// Seeded k-fold evaluation of `table` (vectorizer fit per training split).
pub fn cross_validate(table: &EnrichedTable, config: &EvalConfig) -> Result<EvalOutcome> {
    match config.model {
        ModelChoice::LassoLinear => evaluate_kind(table, ModelKind::LassoLinear, config),
        ModelChoice::RandomForest => evaluate_kind(table, ModelKind::RandomForest, config),
        ModelChoice::BestOfBoth => {
            let start = Instant::now();
            let linear = evaluate_kind(table, ModelKind::LassoLinear, config)?;
            let forest = evaluate_kind(table, ModelKind::RandomForest, config)?;
            let forest_wins = if linear.report.metric.higher_is_better() {
                forest.report.mean > linear.report.mean
            } else {
                forest.report.mean < linear.report.mean
            };
            let mut best = if forest_wins { forest } else { linear };
            best.report.wall_time_seconds = start.elapsed().as_secs_f64();
            Ok(best)
        }
    }
}
