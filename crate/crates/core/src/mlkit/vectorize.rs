use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, MlError, Origin, Result, Target};
use crate::enrich::{normalize_numeric, EnrichedTable};
use crate::tablecore::{is_empty_cell, TaskKind};
use crate::textenc::tokenize;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorizeScheme {
    /// Every column as TF-IDF text features.
    Tfidf,
    /// Every column as binary token-presence features.
    Onehot,
    /// Numeric columns as one feature, the rest as TF-IDF.
    #[default]
    Auto,
}

impl std::str::FromStr for VectorizeScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tfidf" => Ok(Self::Tfidf),
            "onehot" => Ok(Self::Onehot),
            "auto" => Ok(Self::Auto),
            other => Err(format!("unknown vectorize scheme '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizeOptions {
    pub scheme: VectorizeScheme,
    /// Tokens seen in fewer training rows than this are dropped.
    pub min_df: usize,
    /// Share of nonempty cells that must parse for a column to count as numeric.
    pub numeric_ratio: f64,
}

impl Default for VectorizeOptions {
    fn default() -> Self {
        Self {
            scheme: VectorizeScheme::Auto,
            min_df: 2,
            numeric_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum ColumnRef {
    Base(usize),
    Enriched(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Encoding {
    Numeric {
        mean: f64,
    },
    Text {
        vocab: Vec<String>,
        weights: Vec<f64>,
        binary: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnEncoder {
    column: ColumnRef,
    label: String,
    origin: Origin,
    encoding: Encoding,
}

/// Per-column encoders learned from a set of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    encoders: Vec<ColumnEncoder>,
    feature_names: Vec<String>,
    origins: Vec<Origin>,
}

fn cell(table: &EnrichedTable, column: ColumnRef, row: usize) -> &str {
    match column {
        ColumnRef::Base(c) => &table.base.rows[row][c],
        ColumnRef::Enriched(c) => &table.enriched_columns[c].cells[row],
    }
}

fn parse_finite(cell: &str) -> Option<f64> {
    normalize_numeric(cell)
        .map(|v| v.magnitude)
        .filter(|m| m.is_finite())
}

fn feature_columns(table: &EnrichedTable) -> Vec<(ColumnRef, String, Origin)> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut unique = |name: &str| {
        let n = seen.entry(name.to_string()).or_insert(0);
        *n += 1;
        if *n == 1 {
            name.to_string()
        } else {
            format!("{name}#{n}")
        }
    };
    let mut out = Vec::new();
    for (c, name) in table.base.column_names.iter().enumerate() {
        if c != table.base.task_column {
            out.push((ColumnRef::Base(c), unique(name), Origin::Query));
        }
    }
    for (c, col) in table.enriched_columns.iter().enumerate() {
        out.push((ColumnRef::Enriched(c), unique(&col.name), Origin::Enriched));
    }
    out
}

/// Parses the task column of the whole table. Class labels are the sorted
/// distinct trimmed cells so every fold shares one label space.
pub(crate) fn parse_target<T: Scalar>(table: &EnrichedTable) -> Result<Target<T>> {
    let base = &table.base;
    match base.task_kind {
        TaskKind::Regression => {
            let mut values = Vec::with_capacity(base.num_rows());
            for r in 0..base.num_rows() {
                let raw = base.task_cell(r);
                let v = parse_finite(raw).map(T::of).filter(|v| v.is_finite());
                match v {
                    Some(v) => values.push(v),
                    None => {
                        return Err(MlError::InvalidTarget {
                            row: r,
                            value: raw.to_string(),
                        })
                    }
                }
            }
            Ok(Target::Regression(values))
        }
        TaskKind::Classification => {
            let mut classes = BTreeSet::new();
            for r in 0..base.num_rows() {
                let raw = base.task_cell(r);
                if is_empty_cell(raw) {
                    return Err(MlError::InvalidTarget {
                        row: r,
                        value: raw.to_string(),
                    });
                }
                classes.insert(raw.trim().to_string());
            }
            let classes: Vec<String> = classes.into_iter().collect();
            let labels = (0..base.num_rows())
                .map(|r| {
                    let raw = base.task_cell(r).trim();
                    classes
                        .binary_search_by(|c| c.as_str().cmp(raw))
                        .expect("class collected")
                })
                .collect();
            Ok(Target::Classification { labels, classes })
        }
    }
}

impl Vectorizer {
    /// Learns encoders from `rows` of `table`. The task column is never a feature.
    pub fn fit(table: &EnrichedTable, rows: &[usize], options: &VectorizeOptions) -> Result<Self> {
        if options.min_df == 0 {
            return Err(MlError::InvalidHyperparameter(
                "min_df must be at least 1".into(),
            ));
        }
        let n = rows.len();
        let mut encoders = Vec::new();
        for (column, label, origin) in feature_columns(table) {
            let cells: Vec<&str> = rows.iter().map(|&r| cell(table, column, r)).collect();
            let filled: Vec<&str> = cells
                .iter()
                .copied()
                .filter(|c| !is_empty_cell(c))
                .collect();
            if filled.is_empty() {
                continue;
            }
            if options.scheme == VectorizeScheme::Auto {
                let parsed: Vec<f64> = filled.iter().filter_map(|c| parse_finite(c)).collect();
                if parsed.len() as f64 >= options.numeric_ratio * filled.len() as f64 {
                    let mean = parsed.iter().sum::<f64>() / parsed.len() as f64;
                    encoders.push(ColumnEncoder {
                        column,
                        label,
                        origin,
                        encoding: Encoding::Numeric { mean },
                    });
                    continue;
                }
            }
            let mut df: BTreeMap<String, usize> = BTreeMap::new();
            for c in &filled {
                for t in tokenize(c).set.iter() {
                    *df.entry(t.to_string()).or_insert(0) += 1;
                }
            }
            let binary = options.scheme == VectorizeScheme::Onehot;
            let (vocab, weights): (Vec<String>, Vec<f64>) = df
                .into_iter()
                .filter(|(_, d)| *d >= options.min_df)
                .map(|(t, d)| {
                    let w = if binary {
                        1.0
                    } else {
                        (n as f64 / d as f64).ln()
                    };
                    (t, w)
                })
                .unzip();
            if vocab.is_empty() {
                continue;
            }
            encoders.push(ColumnEncoder {
                column,
                label,
                origin,
                encoding: Encoding::Text {
                    vocab,
                    weights,
                    binary,
                },
            });
        }
        if encoders.is_empty() {
            return Err(MlError::NoFeatures);
        }
        let mut feature_names = Vec::new();
        let mut origins = Vec::new();
        for e in &encoders {
            match &e.encoding {
                Encoding::Numeric { .. } => {
                    feature_names.push(e.label.clone());
                    origins.push(e.origin);
                }
                Encoding::Text { vocab, .. } => {
                    for t in vocab {
                        feature_names.push(format!("{}::{t}", e.label));
                        origins.push(e.origin);
                    }
                }
            }
        }
        Ok(Self {
            encoders,
            feature_names,
            origins,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Encodes `rows` of `table` (which must have the layout seen by `fit`).
    pub fn transform<T: Scalar>(
        &self,
        table: &EnrichedTable,
        rows: &[usize],
    ) -> Result<FeatureMatrix<T>> {
        let mut values = Array2::<T>::zeros((rows.len(), self.num_features()));
        let mut offset = 0;
        for e in &self.encoders {
            match &e.encoding {
                Encoding::Numeric { mean } => {
                    let fallback = T::of(*mean);
                    for (i, &r) in rows.iter().enumerate() {
                        let v = parse_finite(cell(table, e.column, r)).map(T::of);
                        values[[i, offset]] = v.filter(|v| v.is_finite()).unwrap_or(fallback);
                    }
                    offset += 1;
                }
                Encoding::Text {
                    vocab,
                    weights,
                    binary,
                } => {
                    for (i, &r) in rows.iter().enumerate() {
                        let c = cell(table, e.column, r);
                        if is_empty_cell(c) {
                            continue;
                        }
                        for t in tokenize(c).list {
                            if let Ok(j) = vocab.binary_search(&t) {
                                let slot = &mut values[[i, offset + j]];
                                if *binary {
                                    *slot = T::one();
                                } else {
                                    *slot += T::of(weights[j]);
                                }
                            }
                        }
                    }
                    offset += vocab.len();
                }
            }
        }
        let target = parse_target::<T>(table)?.select_rows(rows);
        Ok(FeatureMatrix::with_origins(
            self.feature_names.clone(),
            self.origins.clone(),
            values,
            target,
        ))
    }
}

/// Fits on every row of `table` and encodes it.
pub fn vectorize<T: Scalar>(
    table: &EnrichedTable,
    options: &VectorizeOptions,
) -> Result<FeatureMatrix<T>> {
    let rows: Vec<usize> = (0..table.num_rows()).collect();
    Vectorizer::fit(table, &rows, options)?.transform(table, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrich::{ColumnSource, EnrichedColumn};
    use crate::tablecore::QueryTable;

    fn table(extra: &[(&str, &[&str])], target: &[&str], kind: TaskKind) -> EnrichedTable {
        let rows = target
            .iter()
            .enumerate()
            .map(|(i, t)| vec![format!("k{i}"), t.to_string()])
            .collect();
        let base = QueryTable::new(vec!["key".into(), "y".into()], rows, 0, 1, kind).unwrap();
        let mut t = EnrichedTable::unenriched(base);
        for (name, cells) in extra {
            t.enriched_columns.push(EnrichedColumn {
                name: name.to_string(),
                provenance: vec![ColumnSource {
                    table_id: "t".into(),
                    column: name.to_string(),
                }],
                cells: cells.iter().map(|c| c.to_string()).collect(),
            });
        }
        t
    }

    #[test]
    fn numeric_column_mean_imputed() {
        let t = table(
            &[("n", &["2", "4", ""])],
            &["1", "2", "3"],
            TaskKind::Regression,
        );
        let x = vectorize::<f64>(&t, &VectorizeOptions::default()).unwrap();
        assert_eq!(x.feature_names, vec!["n"]);
        assert_eq!(x.values.column(0).to_vec(), vec![2.0, 4.0, 3.0]);
        assert_eq!(x.origins, vec![Origin::Enriched]);
    }

    #[test]
    fn onehot_two_tokens() {
        let t = table(
            &[("color", &["red", "blue"])],
            &["1", "2"],
            TaskKind::Regression,
        );
        let opts = VectorizeOptions {
            scheme: VectorizeScheme::Onehot,
            min_df: 1,
            ..Default::default()
        };
        let x = vectorize::<f64>(&t, &opts).unwrap();
        let color: Vec<usize> = (0..x.num_features())
            .filter(|&j| x.feature_names[j].starts_with("color::"))
            .collect();
        assert_eq!(color.len(), 2);
        let red = x
            .feature_names
            .iter()
            .position(|n| n == "color::red")
            .unwrap();
        let blue = x
            .feature_names
            .iter()
            .position(|n| n == "color::blue")
            .unwrap();
        assert_eq!((x.values[[0, red]], x.values[[0, blue]]), (1.0, 0.0));
        assert_eq!((x.values[[1, red]], x.values[[1, blue]]), (0.0, 1.0));
    }

    #[test]
    fn tfidf_ubiquitous_token_weighs_zero() {
        let t = table(
            &[("d", &["big cat", "big dog", "big cat"])],
            &["1", "2", "3"],
            TaskKind::Regression,
        );
        let opts = VectorizeOptions {
            scheme: VectorizeScheme::Tfidf,
            min_df: 1,
            ..Default::default()
        };
        let x = vectorize::<f64>(&t, &opts).unwrap();
        let big = x.feature_names.iter().position(|n| n == "d::big").unwrap();
        assert!(x.values.column(big).iter().all(|&v| v == 0.0));
        let cat = x.feature_names.iter().position(|n| n == "d::cat").unwrap();
        assert!((x.values[[0, cat]] - (1.5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn min_df_floor_drops_rare_tokens() {
        let t = table(
            &[("d", &["a b", "a c", "a"])],
            &["1", "2", "3"],
            TaskKind::Regression,
        );
        let opts = VectorizeOptions {
            scheme: VectorizeScheme::Onehot,
            ..Default::default()
        };
        let x = vectorize::<f64>(&t, &opts).unwrap();
        assert!(x.feature_names.contains(&"d::a".to_string()));
        assert!(!x.feature_names.contains(&"d::b".to_string()));
    }

    #[test]
    fn task_column_never_a_feature_and_key_is_text() {
        let t = table(&[], &["1", "2", "3"], TaskKind::Regression);
        let opts = VectorizeOptions {
            min_df: 1,
            ..Default::default()
        };
        let x = vectorize::<f64>(&t, &opts).unwrap();
        assert!(x.feature_names.iter().all(|n| n.starts_with("key::")));
        assert_eq!(x.target, Target::Regression(vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn all_empty_is_no_features() {
        let t = table(
            &[("e", &["", " ", ""])],
            &["1", "2", "3"],
            TaskKind::Regression,
        );
        let opts = VectorizeOptions {
            min_df: 5,
            ..Default::default()
        };
        assert!(matches!(
            vectorize::<f64>(&t, &opts),
            Err(MlError::NoFeatures)
        ));
    }

    #[test]
    fn classification_labels_sorted() {
        let t = table(
            &[("n", &["1", "2", "3"])],
            &["dog", "cat", "dog"],
            TaskKind::Classification,
        );
        let x = vectorize::<f32>(&t, &VectorizeOptions::default()).unwrap();
        assert_eq!(
            x.target,
            Target::Classification {
                labels: vec![1, 0, 1],
                classes: vec!["cat".into(), "dog".into()]
            }
        );
    }

    #[test]
    fn bad_regression_target_rejected() {
        let t = table(&[("n", &["1", "2"])], &["1", "abc"], TaskKind::Regression);
        assert!(matches!(
            vectorize::<f64>(&t, &VectorizeOptions::default()),
            Err(MlError::InvalidTarget { row: 1, .. })
        ));
    }
}
