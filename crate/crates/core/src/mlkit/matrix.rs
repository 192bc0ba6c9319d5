use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::tablecore::TaskKind;
use crate::Scalar;

/// Whether a feature was derived from a query column or an enriched one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Query,
    Enriched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target<T> {
    Regression(Vec<T>),
    /// Class indices into `classes`.
    Classification {
        labels: Vec<usize>,
        classes: Vec<String>,
    },
}

impl<T: Scalar> Target<T> {
    pub fn len(&self) -> usize {
        match self {
            Target::Regression(v) => v.len(),
            Target::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_kind(&self) -> TaskKind {
        match self {
            Target::Regression(_) => TaskKind::Regression,
            Target::Classification { .. } => TaskKind::Classification,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        match self {
            Target::Regression(v) => Target::Regression(rows.iter().map(|&r| v[r]).collect()),
            Target::Classification { labels, classes } => Target::Classification {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                classes: classes.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    pub feature_names: Vec<String>,
    pub origins: Vec<Origin>,
    pub values: Array2<T>,
    pub target: Target<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    /// Matrix whose features all originate from the query table.
    pub fn new(feature_names: Vec<String>, values: Array2<T>, target: Target<T>) -> Self {
        let origins = vec![Origin::Query; feature_names.len()];
        Self::with_origins(feature_names, origins, values, target)
    }

    pub fn with_origins(
        feature_names: Vec<String>,
        origins: Vec<Origin>,
        values: Array2<T>,
        target: Target<T>,
    ) -> Self {
        assert_eq!(feature_names.len(), values.ncols(), "one name per column");
        assert_eq!(origins.len(), values.ncols(), "one origin per column");
        assert_eq!(target.len(), values.nrows(), "one target per row");
        Self {
            feature_names,
            origins,
            values,
            target,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            origins: self.origins.clone(),
            values: self.values.select(Axis(0), rows),
            target: self.target.select_rows(rows),
        }
    }

    pub fn select_features(&self, features: &[usize]) -> Self {
        Self {
            feature_names: features
                .iter()
                .map(|&f| self.feature_names[f].clone())
                .collect(),
            origins: features.iter().map(|&f| self.origins[f]).collect(),
            values: self.values.select(Axis(1), features),
            target: self.target.clone(),
        }
    }
}
