use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Fitted, Model, ModelKind, Origin};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature_name: String,
    pub importance: f64,
    pub origin: Origin,
}

/// Features ranked by descending importance (name breaks ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub model: ModelKind,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    pub fn top(&self, n: usize) -> &[FeatureImportance] {
        &self.features[..n.min(self.features.len())]
    }
}

/// Forest: normalized mean impurity decrease. Linear: normalized absolute
/// standardized coefficients (summed over classes). Constant models: zeros.
pub fn feature_importance<T: Scalar>(model: &Model<T>, x: &FeatureMatrix<T>) -> ImportanceReport {
    let p = x.num_features();
    let raw: Vec<f64> = match &model.fitted {
        Fitted::Forest(f) => f.importances.iter().map(|v| v.as_f64()).collect(),
        Fitted::Lasso(m) => m
            .standardized_weights
            .iter()
            .map(|w| w.abs().as_f64())
            .collect(),
        Fitted::Logistic(m) => (0..p)
            .map(|j| {
                m.standardized_weights
                    .iter()
                    .map(|w| w[j].abs().as_f64())
                    .sum()
            })
            .collect(),
        Fitted::ConstantValue(_) | Fitted::ConstantClass(_) => vec![0.0; p],
    };
    let total: f64 = raw.iter().sum();
    let mut features: Vec<FeatureImportance> = raw
        .iter()
        .enumerate()
        .map(|(j, &v)| FeatureImportance {
            feature_name: x.feature_names[j].clone(),
            importance: if total > 0.0 { v / total } else { 0.0 },
            origin: x.origins[j],
        })
        .collect();
    features.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.feature_name.cmp(&b.feature_name))
    });
    ImportanceReport {
        model: model.kind,
        features,
    }
}
