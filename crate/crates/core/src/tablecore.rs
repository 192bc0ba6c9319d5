//! Query and target table model, corpus ingestion and validation.
//!
//! Cells stay raw strings until vectorization. An empty string is the
//! missing-cell sentinel; [`is_empty_cell`] is the single definition of
//! emptiness used by alignment and vectorization.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File suffix of corpus table files.
pub const TABLE_FILE_SUFFIX: &str = ".table.json";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("malformed csv: {0}")]
    MalformedCsv(String),
    #[error("unknown column: {0}")]
    UnknownColumn(String),
    #[error("key column and task column must differ")]
    KeyEqualsTask,
    #[error("invalid table {id}: {reason}")]
    InvalidTable { id: String, reason: String },
    #[error("duplicate table id: {0}")]
    DuplicateId(String),
    #[error("corpus contains no valid tables")]
    EmptyCorpus,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TableError> = std::result::Result<T, E>;

/// True for the missing-cell sentinel (empty or whitespace-only).
#[inline]
pub fn is_empty_cell(cell: &str) -> bool {
    cell.trim().is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(TaskKind::Regression),
            "classification" => Ok(TaskKind::Classification),
            other => Err(format!("unknown task kind '{other}'")),
        }
    }
}

/// The user's table: one key (join) column and one task (target) column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub key_column: usize,
    pub task_column: usize,
    pub task_kind: TaskKind,
}

impl QueryTable {
    /// Builds a query table, checking every invariant.
    pub fn new(
        column_names: Vec<String>,
        rows: Vec<Vec<String>>,
        key_column: usize,
        task_column: usize,
        task_kind: TaskKind,
    ) -> Result<Self> {
        let width = column_names.len();
        if key_column >= width {
            return Err(TableError::UnknownColumn(format!("index {key_column}")));
        }
        if task_column >= width {
            return Err(TableError::UnknownColumn(format!("index {task_column}")));
        }
        if key_column == task_column {
            return Err(TableError::KeyEqualsTask);
        }
        if rows.is_empty() {
            return Err(TableError::MalformedCsv("no data rows".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(TableError::MalformedCsv(format!(
                "row {i} has {} cells, expected {width}",
                rows[i].len()
            )));
        }
        Ok(Self {
            column_names,
            rows,
            key_column,
            task_column,
            task_kind,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn key_cell(&self, row: usize) -> &str {
        &self.rows[row][self.key_column]
    }

    pub fn task_cell(&self, row: usize) -> &str {
        &self.rows[row][self.task_column]
    }

    pub fn key_name(&self) -> &str {
        &self.column_names[self.key_column]
    }

    pub fn task_name(&self) -> &str {
        &self.column_names[self.task_column]
    }

    /// Serializes as RFC-4180 CSV with a header row.
    pub fn to_csv(&self) -> Vec<u8> {
        write_csv(&self.column_names, &self.rows)
    }
}

pub(crate) fn write_csv(header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to vec");
    for row in rows {
        w.write_record(row).expect("write to vec");
    }
    w.into_inner().expect("flush to vec")
}

/// Parses a header plus at least one data row.
pub fn parse_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| TableError::MalformedCsv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(TableError::MalformedCsv("empty file".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TableError::MalformedCsv(e.to_string()))?;
        rows.push(record.iter().map(str::to_string).collect::<Vec<_>>());
    }
    if rows.is_empty() {
        return Err(TableError::MalformedCsv("no data rows".into()));
    }
    Ok((header, rows))
}

/// Loads a query table from CSV bytes, resolving the key and task columns by name.
pub fn load_query_table(
    csv_bytes: &[u8],
    key_column_name: &str,
    task_column_name: &str,
    task_kind: TaskKind,
) -> Result<QueryTable> {
    let (header, rows) = parse_csv(csv_bytes)?;
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name.trim())
            .ok_or_else(|| TableError::UnknownColumn(name.to_string()))
    };
    let key = find(key_column_name)?;
    let task = find(task_column_name)?;
    QueryTable::new(header, rows, key, task, task_kind)
}

/// A lake table with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTable {
    pub id: String,
    pub title: String,
    pub context: String,
    #[serde(rename = "columns")]
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source_url: Option<String>,
}

impl TargetTable {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| TableError::InvalidTable {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.column_names.is_empty() {
            return Err(invalid("no columns".into()));
        }
        let width = self.column_names.len();
        if let Some(i) = self.rows.iter().position(|r| r.len() != width) {
            return Err(invalid(format!(
                "row {i} has {} cells, expected {width}",
                self.rows[i].len()
            )));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let table: TargetTable = serde_json::from_slice(bytes)?;
        table.validate()?;
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub table_count: usize,
    pub row_count: usize,
    /// Files rejected during loading.
    pub skipped_count: usize,
}

/// Immutable id-addressable collection of target tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorpusData")]
pub struct Corpus {
    tables: Vec<TargetTable>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
    stats: CorpusStats,
}

impl Corpus {
    /// Builds a corpus from validated tables; duplicate ids are rejected.
    pub fn from_tables(tables: Vec<TargetTable>) -> Result<Self> {
        if tables.is_empty() {
            return Err(TableError::EmptyCorpus);
        }
        for t in &tables {
            t.validate()?;
        }
        let mut corpus = Self {
            stats: CorpusStats {
                table_count: tables.len(),
                row_count: tables.iter().map(TargetTable::num_rows).sum(),
                skipped_count: 0,
            },
            tables,
            by_id: HashMap::new(),
        };
        corpus.reindex()?;
        Ok(corpus)
    }

    fn reindex(&mut self) -> Result<()> {
        self.by_id.clear();
        for (i, t) in self.tables.iter().enumerate() {
            if self.by_id.insert(t.id.clone(), i).is_some() {
                return Err(TableError::DuplicateId(t.id.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&TargetTable> {
        self.by_id.get(id).map(|&i| &self.tables[i])
    }

    pub fn tables(&self) -> &[TargetTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        self.stats
    }

    /// Writes one `<id>.table.json` file per table into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| TableError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for t in &self.tables {
            let path = dir.join(table_file_name(&t.id));
            fs::write(&path, t.to_json()).map_err(|source| TableError::Io { path, source })?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct CorpusData {
    tables: Vec<TargetTable>,
    stats: CorpusStats,
}

impl TryFrom<CorpusData> for Corpus {
    type Error = TableError;

    fn try_from(data: CorpusData) -> Result<Self> {
        let mut corpus = Corpus::from_tables(data.tables)?;
        corpus.stats.skipped_count = data.stats.skipped_count;
        Ok(corpus)
    }
}

fn table_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}{TABLE_FILE_SUFFIX}")
}

/// Loads every `*.table.json` file in `dir`. Invalid files and duplicate ids
/// are skipped and counted.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let io_err = |source| TableError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_table = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(TABLE_FILE_SUFFIX));
        if is_table && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let parsed: Vec<Result<TargetTable>> = paths
        .par_iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|source| TableError::Io {
                path: path.clone(),
                source,
            })?;
            TargetTable::from_json(&bytes)
        })
        .collect();

    let mut tables = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut skipped = 0;
    for (path, table) in paths.iter().zip(parsed) {
        match table {
            Ok(t) if seen.insert(t.id.clone()) => tables.push(t),
            Ok(t) => {
                log::warn!("skipping {}: duplicate id {}", path.display(), t.id);
                skipped += 1;
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if tables.is_empty() {
        return Err(TableError::EmptyCorpus);
    }
    let mut corpus = Corpus::from_tables(tables)?;
    corpus.stats.skipped_count = skipped;
    Ok(corpus)
}
