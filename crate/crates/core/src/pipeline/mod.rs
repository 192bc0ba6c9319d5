//! Orchestrates the enrichment stages under the ablation modes, records
//! timings and persists run results.

mod compare;
mod lakegen;
mod store;

pub use compare::{compare_modes, Comparison, ComparisonRow};
pub use lakegen::{generate_lake, LakeSpec, SyntheticLake};
pub use store::{RunStore, DATA_DIR_ENV};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrich::{
    aggregate_columns, assemble_draft, generate_query_texts, join_row_search, map_rows,
    score_table, select_tables, AggregationStrategy, EnrichError, EnrichedTable, DEFAULT_K,
    DEFAULT_M,
};
use crate::lakeindex::JoinIndex;
use crate::mlkit::{
    cross_validate, record_diffs, EvalConfig, EvalReport, FeatureSelection, Hyperparameters,
    ImportanceReport, Metric, MlError, ModelChoice, Predictions, RecordDiff, VectorizeOptions,
};
use crate::tablecore::{Corpus, QueryTable, TableError, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Search,
    Select,
    Align,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Search => "search",
            Stage::Select => "select",
            Stage::Align => "align",
            Stage::Eval => "eval",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage: {source}")]
    Enrich {
        stage: Stage,
        #[source]
        source: EnrichError,
    },
    #[error("{stage} stage: {source}")]
    Ml {
        stage: Stage,
        #[source]
        source: MlError,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid lake spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("run store: {0}")]
    Store(String),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    NoEnrich,
    Join,
    JoinAlign,
    JoinSelect,
    JoinSelectAlign,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::NoEnrich,
        Mode::Join,
        Mode::JoinAlign,
        Mode::JoinSelect,
        Mode::JoinSelectAlign,
    ];

    pub fn searches(self) -> bool {
        self != Mode::NoEnrich
    }

    pub fn selects(self) -> bool {
        matches!(self, Mode::JoinSelect | Mode::JoinSelectAlign)
    }

    pub fn aligns(self) -> bool {
        matches!(self, Mode::JoinAlign | Mode::JoinSelectAlign)
    }

    /// Display name used in comparison reports.
    pub fn label(self) -> &'static str {
        match self {
            Mode::NoEnrich => "No-enrich",
            Mode::Join => "Join",
            Mode::JoinAlign => "Join-align",
            Mode::JoinSelect => "Join-select",
            Mode::JoinSelectAlign => "Join-select-align",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::NoEnrich => "no_enrich",
            Mode::Join => "join",
            Mode::JoinAlign => "join_align",
            Mode::JoinSelect => "join_select",
            Mode::JoinSelectAlign => "join_select_align",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == norm)
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub k: usize,
    pub m: usize,
    pub aggregation: AggregationStrategy,
    pub selection: Option<FeatureSelection>,
    pub model: ModelChoice,
    pub folds: usize,
    pub seed: u64,
    pub entity_name: Option<String>,
    pub task_description: Option<String>,
    pub hyperparameters: Hyperparameters,
    pub vectorize: VectorizeOptions,
    pub regression_metric: Metric,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::JoinSelectAlign,
            k: DEFAULT_K,
            m: DEFAULT_M,
            aggregation: AggregationStrategy::default(),
            selection: None,
            model: ModelChoice::default(),
            folds: 4,
            seed: 0,
            entity_name: None,
            task_description: None,
            hyperparameters: Hyperparameters::default(),
            vectorize: VectorizeOptions::default(),
            regression_metric: Metric::Mse,
        }
    }
}

impl RunConfig {
    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.folds < 2 {
            return bad("folds must be at least 2".into());
        }
        if let Some(sel) = self.selection {
            if sel.count == 0 {
                return bad("feature-selection count must be at least 1".into());
            }
        }
        if !matches!(self.regression_metric, Metric::Mse | Metric::Rmse) {
            return bad("regression metric must be MSE or RMSE".into());
        }
        self.aggregation
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        self.hyperparameters
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            folds: self.folds,
            seed: self.seed,
            model: self.model,
            hyper: self.hyperparameters,
            vectorize: self.vectorize,
            selection: self.selection,
            regression_metric: self.regression_metric,
        }
    }
}

/// Wall-clock seconds per stage; `None` for stages the mode skips.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub search: Option<f64>,
    pub select: Option<f64>,
    pub align: Option<f64>,
    pub eval: f64,
}

impl StageTimings {
    /// Search + select + align.
    pub fn enrichment(&self) -> Option<f64> {
        self.search
            .map(|s| s + self.select.unwrap_or(0.0) + self.align.unwrap_or(0.0))
    }

    /// Every executed stage, evaluation of the enriched table included.
    pub fn total(&self) -> f64 {
        self.enrichment().unwrap_or(0.0) + self.eval
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateCounts {
    pub tables_after_search: usize,
    /// `None` when the mode skips selection.
    pub tables_after_selection: Option<usize>,
    pub columns_assembled: usize,
    pub columns_after_alignment: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub table_id: String,
    pub title: String,
    pub context: String,
    pub source_url: Option<String>,
    pub score: f64,
    pub contributed_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub timings: StageTimings,
    pub before: EvalReport,
    pub after: EvalReport,
    /// Signed so that positive always means the enriched table scored better.
    pub improvement_percent: f64,
    pub importance: ImportanceReport,
    pub enriched: EnrichedTable,
    /// Contributing tables, by descending relevance score.
    pub provenance: Vec<ProvenanceEntry>,
    pub counts: CandidateCounts,
    pub before_predictions: Predictions,
    pub after_predictions: Predictions,
    /// Changed predictions; `None` for regression.
    pub diffs: Option<Vec<RecordDiff>>,
}

/// `(after - before) / before` in percent, oriented by the metric direction.
pub fn improvement_percent(before: &EvalReport, after: &EvalReport) -> f64 {
    if before.mean == 0.0 {
        return 0.0;
    }
    let delta = if after.metric.higher_is_better() {
        after.mean - before.mean
    } else {
        before.mean - after.mean
    };
    100.0 * delta / before.mean.abs()
}

fn enrich_err(stage: Stage) -> impl Fn(EnrichError) -> PipelineError {
    move |source| PipelineError::Enrich { stage, source }
}

fn ml_err(stage: Stage) -> impl Fn(MlError) -> PipelineError {
    move |source| PipelineError::Ml { stage, source }
}

/// Runs one configuration; `observer` is told when each stage starts.
pub fn run_observed(
    config: &RunConfig,
    q: &QueryTable,
    corpus: &Corpus,
    index: &JoinIndex,
    observer: &mut dyn FnMut(Stage),
) -> Result<RunResult> {
    config.validate()?;
    let provider = index.provider();
    let mode = config.mode;
    let mut timings = StageTimings::default();
    let mut counts = CandidateCounts::default();
    let mut scores: BTreeMap<String, f64> = BTreeMap::new();

    let enriched = if mode.searches() {
        observer(Stage::Search);
        let t = Instant::now();
        let matches = join_row_search(index, q, config.k).map_err(enrich_err(Stage::Search))?;
        timings.search = Some(t.elapsed().as_secs_f64());
        let found: BTreeSet<&str> = matches.iter().map(|m| m.hit.table_id.as_str()).collect();
        counts.tables_after_search = found.len();

        let selected: Option<HashSet<String>> = if mode.selects() {
            observer(Stage::Select);
            let t = Instant::now();
            let texts = generate_query_texts(
                q,
                config.entity_name.as_deref(),
                config.task_description.as_deref(),
            );
            let chosen = select_tables(found.iter().copied(), &texts, corpus, provider, config.m)
                .map_err(enrich_err(Stage::Select))?;
            timings.select = Some(t.elapsed().as_secs_f64());
            counts.tables_after_selection = Some(chosen.len());
            let set = chosen.iter().map(|s| s.table_id.clone()).collect();
            scores.extend(chosen.into_iter().map(|s| (s.table_id, s.score)));
            Some(set)
        } else {
            None
        };

        observer(Stage::Align);
        let t = Instant::now();
        let mapped = map_rows(&matches, selected.as_ref());
        let draft = assemble_draft(q, &mapped, corpus).map_err(enrich_err(Stage::Align))?;
        counts.columns_assembled = draft.enriched_columns.len();
        let enriched = if mode.aligns() {
            aggregate_columns(&draft, config.aggregation, provider)
                .map_err(enrich_err(Stage::Align))?
        } else {
            draft
        };
        timings.align = Some(t.elapsed().as_secs_f64());
        counts.columns_after_alignment = enriched.enriched_columns.len();

        // relevance scores for modes that skip selection, outside the timed stages
        if !mode.selects() {
            let texts = generate_query_texts(
                q,
                config.entity_name.as_deref(),
                config.task_description.as_deref(),
            );
            for id in &found {
                if let Some(t) = corpus.get(id) {
                    let s = score_table(&texts, t, provider).map_err(enrich_err(Stage::Select))?;
                    scores.insert(s.table_id, s.score);
                }
            }
        }
        enriched
    } else {
        EnrichedTable::unenriched(q.clone())
    };

    observer(Stage::Eval);
    let eval = config.eval_config();
    let before = cross_validate(&EnrichedTable::unenriched(q.clone()), &eval)
        .map_err(ml_err(Stage::Eval))?;
    let t = Instant::now();
    let after = if mode.searches() {
        cross_validate(&enriched, &eval).map_err(ml_err(Stage::Eval))?
    } else {
        before.clone()
    };
    timings.eval = if mode.searches() {
        t.elapsed().as_secs_f64()
    } else {
        before.report.wall_time_seconds
    };

    let provenance = provenance_entries(&enriched, &scores, corpus, mode);
    let diffs = match q.task_kind {
        TaskKind::Classification => {
            let truth: Vec<String> = (0..q.num_rows())
                .map(|r| q.task_cell(r).trim().to_string())
                .collect();
            Some(
                record_diffs(&before.predictions, &after.predictions, &truth)
                    .map_err(ml_err(Stage::Eval))?,
            )
        }
        TaskKind::Regression => None,
    };
    Ok(RunResult {
        config: config.clone(),
        timings,
        improvement_percent: improvement_percent(&before.report, &after.report),
        before: before.report,
        after: after.report,
        importance: after.importance,
        enriched,
        provenance,
        counts,
        before_predictions: before.predictions,
        after_predictions: after.predictions,
        diffs,
    })
}

pub fn run(
    config: &RunConfig,
    q: &QueryTable,
    corpus: &Corpus,
    index: &JoinIndex,
) -> Result<RunResult> {
    run_observed(config, q, corpus, index, &mut |_| {})
}

fn provenance_entries(
    enriched: &EnrichedTable,
    scores: &BTreeMap<String, f64>,
    corpus: &Corpus,
    mode: Mode,
) -> Vec<ProvenanceEntry> {
    if !mode.searches() {
        return vec![];
    }
    let mut contributed: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for col in &enriched.enriched_columns {
        for src in &col.provenance {
            contributed
                .entry(src.table_id.as_str())
                .or_default()
                .push(src.column.clone());
        }
    }
    // select modes list every selected table; the others list contributors
    let ids: BTreeSet<&str> = if mode.selects() {
        scores.keys().map(String::as_str).collect()
    } else {
        contributed.keys().copied().collect()
    };
    let mut out: Vec<ProvenanceEntry> = ids
        .into_iter()
        .filter_map(|id| corpus.get(id))
        .map(|t| {
            let mut cols = contributed.get(t.id.as_str()).cloned().unwrap_or_default();
            cols.sort();
            cols.dedup();
            ProvenanceEntry {
                table_id: t.id.clone(),
                title: t.title.clone(),
                context: t.context.clone(),
                source_url: t.source_url.clone(),
                score: scores.get(&t.id).copied().unwrap_or(0.0),
                contributed_columns: cols,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    out
}
