//! Join-row search, task-related table selection, row mapping and column
//! aggregation: everything that turns a query table into an enriched table.

mod align;
mod kmeans;
mod search;
mod select;
mod units;

pub use align::{
    aggregate_columns, assemble_draft, default_cluster_count, group_columns, map_rows,
    normalize_column_name, AggregationStrategy, MappedRow,
};
pub use kmeans::{kmeans, KMeansResult};
pub use search::{join_row_search, CandidateMatch};
pub use select::{generate_query_texts, score_table, select_tables, TableScore};
pub use units::{format_number, normalize_numeric, resolve_conflicts, Unit, UnitValue};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lakeindex::IndexError;
use crate::tablecore::{is_empty_cell, write_csv, QueryTable};

pub const DEFAULT_K: usize = 60;
pub const DEFAULT_M: usize = 600;
pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("join index is empty")]
    IndexEmpty,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("m must be at least 1")]
    InvalidM,
    #[error("at least one query text is required")]
    NoQueryText,
    #[error("cluster count must be at least 1")]
    InvalidClusterCount,
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("mapped row references unknown table {0}")]
    UnknownTable(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub type Result<T, E = EnrichError> = std::result::Result<T, E>;

/// Where an enriched column's values came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnSource {
    pub table_id: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedColumn {
    pub name: String,
    pub provenance: Vec<ColumnSource>,
    pub cells: Vec<String>,
}

impl EnrichedColumn {
    pub fn empty_count(&self) -> usize {
        self.cells.iter().filter(|c| is_empty_cell(c)).count()
    }
}

/// The query table, untouched, plus the columns added to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedTable {
    pub base: QueryTable,
    pub enriched_columns: Vec<EnrichedColumn>,
    #[serde(default)]
    pub aggregation: Option<AggregationStrategy>,
}

impl EnrichedTable {
    pub fn unenriched(base: QueryTable) -> Self {
        Self {
            base,
            enriched_columns: vec![],
            aggregation: None,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.base.num_rows()
    }

    pub fn empty_cell_count(&self) -> usize {
        self.enriched_columns
            .iter()
            .map(EnrichedColumn::empty_count)
            .sum()
    }

    /// Fraction of enriched cells that are empty; 0 when nothing was added.
    pub fn empty_fraction(&self) -> f64 {
        let total = self.enriched_columns.len() * self.num_rows();
        if total == 0 {
            0.0
        } else {
            self.empty_cell_count() as f64 / total as f64
        }
    }

    /// Base columns first, then enriched columns.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut header = self.base.column_names.clone();
        header.extend(self.enriched_columns.iter().map(|c| c.name.clone()));
        let rows: Vec<Vec<String>> = (0..self.num_rows())
            .map(|i| {
                let mut row = self.base.rows[i].clone();
                row.extend(self.enriched_columns.iter().map(|c| c.cells[i].clone()));
                row
            })
            .collect();
        write_csv(&header, &rows)
    }

    /// Companion document for [`EnrichedTable::to_csv`].
    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "aggregation": self.aggregation,
            "columns": self
                .enriched_columns
                .iter()
                .map(|c| serde_json::json!({ "name": c.name, "sources": c.provenance }))
                .collect::<Vec<_>>(),
        })
    }
}
