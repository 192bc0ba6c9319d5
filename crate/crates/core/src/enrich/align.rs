use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::search::{outranks, CandidateMatch};
use super::units::resolve_conflicts;
use super::{ColumnSource, EnrichError, EnrichedColumn, EnrichedTable, Result};
use crate::lakeindex::{Measure, SearchHit};
use crate::tablecore::{is_empty_cell, Corpus, QueryTable};
use crate::textenc::{jaccard, tokenize, EmbeddingProvider};
use crate::Embedding;

const KMEANS_SEED: u64 = 0x7ab1e;
const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-6;

/// The single target row kept for one `(query_row, table)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedRow {
    pub query_row: usize,
    pub table_id: String,
    pub row_index: usize,
    /// Column of the matched key cell.
    pub column_index: usize,
    pub measure: Measure,
    pub score: f64,
}

impl MappedRow {
    fn from_hit(query_row: usize, hit: &SearchHit) -> Self {
        Self {
            query_row,
            table_id: hit.table_id.clone(),
            row_index: hit.row_index,
            column_index: hit.column_index,
            measure: hit.measure,
            score: hit.score,
        }
    }
}

/// Keeps the best match per `(query_row, table)`.
///
/// Measure priority decides first, the raw score within a measure second and
/// the lower row index last. Matches into tables outside `selected` are
/// dropped; `None` keeps every table.
pub fn map_rows(matches: &[CandidateMatch], selected: Option<&HashSet<String>>) -> Vec<MappedRow> {
    let mut best: BTreeMap<(usize, &str), &SearchHit> = BTreeMap::new();
    for m in matches {
        if selected.is_some_and(|s| !s.contains(&m.hit.table_id)) {
            continue;
        }
        let slot = (m.query_row, m.hit.table_id.as_str());
        match best.get(&slot) {
            Some(kept) if !outranks(&m.hit, kept) => {}
            _ => {
                best.insert(slot, &m.hit);
            }
        }
    }
    best.into_iter()
        .map(|((row, _), hit)| MappedRow::from_hit(row, hit))
        .collect()
}

/// One column per `(table, non-key column)`; cells are filled for mapped query
/// rows and empty elsewhere. Tables appear in id order.
pub fn assemble_draft(
    q: &QueryTable,
    mapped: &[MappedRow],
    corpus: &Corpus,
) -> Result<EnrichedTable> {
    let mut by_table: BTreeMap<&str, Vec<&MappedRow>> = BTreeMap::new();
    for m in mapped {
        by_table.entry(m.table_id.as_str()).or_default().push(m);
    }
    let n = q.num_rows();
    let mut columns = Vec::new();
    for (table_id, rows) in by_table {
        let table = corpus
            .get(table_id)
            .ok_or_else(|| EnrichError::UnknownTable(table_id.to_string()))?;
        let key_cols: HashSet<usize> = rows.iter().map(|m| m.column_index).collect();
        for (c, name) in table.column_names.iter().enumerate() {
            if key_cols.contains(&c) {
                continue;
            }
            let mut cells = vec![String::new(); n];
            for m in &rows {
                let row = table.rows.get(m.row_index).ok_or_else(|| {
                    EnrichError::UnknownTable(format!("{table_id} row {}", m.row_index))
                })?;
                cells[m.query_row] = row[c].clone();
            }
            columns.push(EnrichedColumn {
                name: name.clone(),
                provenance: vec![ColumnSource {
                    table_id: table_id.to_string(),
                    column: name.clone(),
                }],
                cells,
            });
        }
    }
    Ok(EnrichedTable {
        base: q.clone(),
        enriched_columns: columns,
        aggregation: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AggregationStrategy {
    /// Exact normalized column name.
    Hard,
    /// k-means over name embeddings; `None` picks [`default_cluster_count`].
    Soft { cluster_count: Option<usize> },
    /// Single-linkage over name-token Jaccard ≥ `tau`.
    Threshold { tau: f64 },
}

impl Default for AggregationStrategy {
    fn default() -> Self {
        AggregationStrategy::Threshold {
            tau: super::DEFAULT_TAU,
        }
    }
}

impl AggregationStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationStrategy::Soft {
                cluster_count: Some(0),
            } => Err(EnrichError::InvalidClusterCount),
            AggregationStrategy::Threshold { tau } if !(tau > 0.0 && tau <= 1.0) => {
                Err(EnrichError::InvalidThreshold(tau))
            }
            _ => Ok(()),
        }
    }
}

/// Lowercase with inner whitespace collapsed to single spaces.
pub fn normalize_column_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// `max(1, ceil(distinct names / 4))`.
pub fn default_cluster_count(names: &[String]) -> usize {
    let distinct: HashSet<String> = names.iter().map(|n| normalize_column_name(n)).collect();
    distinct.len().div_ceil(4).max(1)
}

struct DisjointSets(Vec<usize>);

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn groups_from_labels(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let g = *slot.entry(l).or_insert_with(|| {
            groups.push(vec![]);
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Partitions column indices by `names` under `strategy`. Groups are ordered
/// by their first member; members are ascending.
pub fn group_columns(
    names: &[String],
    strategy: AggregationStrategy,
    provider: &EmbeddingProvider,
) -> Result<Vec<Vec<usize>>> {
    strategy.validate()?;
    let normalized: Vec<String> = names.iter().map(|n| normalize_column_name(n)).collect();
    let labels: Vec<usize> = match strategy {
        AggregationStrategy::Hard => {
            let mut ids: HashMap<&str, usize> = HashMap::new();
            normalized
                .iter()
                .map(|n| {
                    let next = ids.len();
                    *ids.entry(n.as_str()).or_insert(next)
                })
                .collect()
        }
        AggregationStrategy::Threshold { tau } => {
            let distinct: Vec<&String> = normalized
                .iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let position: HashMap<&str, usize> = distinct
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect();
            let tokens: Vec<_> = distinct.iter().map(|n| tokenize(n).set).collect();
            let mut sets = DisjointSets::new(distinct.len());
            for i in 0..distinct.len() {
                for j in i + 1..distinct.len() {
                    if jaccard(&tokens[i], &tokens[j]) >= tau {
                        sets.union(i, j);
                    }
                }
            }
            normalized
                .iter()
                .map(|n| sets.find(position[n.as_str()]))
                .collect()
        }
        AggregationStrategy::Soft { cluster_count } => {
            let k = cluster_count.unwrap_or_else(|| default_cluster_count(names));
            let points: Vec<Vec<f64>> = normalized
                .iter()
                .map(|n| {
                    let e: Embedding = provider
                        .embed(n)
                        .unwrap_or_else(|_| Embedding::zeros(provider.dimension()));
                    e.values().to_vec()
                })
                .collect();
            kmeans(&points, k, KMEANS_SEED, KMEANS_MAX_ITER, KMEANS_TOL).assignments
        }
    };
    Ok(groups_from_labels(&labels))
}

fn group_name(members: &[&EnrichedColumn]) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in members {
        *counts.entry(normalize_column_name(&c.name)).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|(_, n)| *n == top)
        .map(|(name, _)| name)
        .unwrap_or_default()
}

/// Merges draft columns group by group. Per row, a single nonempty member
/// cell is kept verbatim and several are merged by [`resolve_conflicts`].
pub fn aggregate_columns(
    draft: &EnrichedTable,
    strategy: AggregationStrategy,
    provider: &EmbeddingProvider,
) -> Result<EnrichedTable> {
    let names: Vec<String> = draft
        .enriched_columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    let groups = group_columns(&names, strategy, provider)?;
    let n = draft.num_rows();
    let columns = groups
        .iter()
        .map(|group| {
            let members: Vec<&EnrichedColumn> =
                group.iter().map(|&i| &draft.enriched_columns[i]).collect();
            if let [only] = members.as_slice() {
                let mut col = (*only).clone();
                col.name = group_name(&members);
                return col;
            }
            let cells = (0..n)
                .map(|row| {
                    let filled: Vec<&str> = members
                        .iter()
                        .map(|c| c.cells[row].as_str())
                        .filter(|c| !is_empty_cell(c))
                        .collect();
                    match filled.as_slice() {
                        [] => String::new(),
                        [one] => one.to_string(),
                        many => resolve_conflicts(many),
                    }
                })
                .collect();
            EnrichedColumn {
                name: group_name(&members),
                provenance: members
                    .iter()
                    .flat_map(|c| c.provenance.iter().cloned())
                    .collect(),
                cells,
            }
        })
        .collect();
    Ok(EnrichedTable {
        base: draft.base.clone(),
        enriched_columns: columns,
        aggregation: Some(strategy),
    })
}
