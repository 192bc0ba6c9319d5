use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnrichError, Result};
use crate::tablecore::{Corpus, QueryTable, TargetTable};
use crate::textenc::{cosine_similarity, EmbeddingProvider};
use crate::Embedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableScore {
    pub table_id: String,
    pub score: f64,
}

/// Query texts for table selection.
///
/// Always contains the column names joined by `", "`. Adds `"<entity> <task
/// column>"` in lowercase when an entity name is given, and the task
/// description verbatim.
pub fn generate_query_texts(
    q: &QueryTable,
    entity_name: Option<&str>,
    task_description: Option<&str>,
) -> Vec<String> {
    let mut texts = vec![q.column_names.join(", ")];
    if let Some(entity) = entity_name.map(str::trim).filter(|e| !e.is_empty()) {
        texts.push(format!("{} {}", entity, q.task_name().trim()).to_lowercase());
    }
    if let Some(desc) = task_description.filter(|d| !d.trim().is_empty()) {
        texts.push(desc.to_string());
    }
    texts
}

fn embed_or_zero(provider: &EmbeddingProvider, text: &str) -> Embedding {
    provider
        .embed(text)
        .unwrap_or_else(|_| Embedding::zeros(provider.dimension()))
}

/// Title, context and the joined column names.
pub(crate) fn target_texts(t: &TargetTable) -> [String; 3] {
    [
        t.title.clone(),
        t.context.clone(),
        t.column_names.join(", "),
    ]
}

fn max_pairwise(queries: &[Embedding], t: &TargetTable, provider: &EmbeddingProvider) -> f64 {
    let targets: Vec<Embedding> = target_texts(t)
        .iter()
        .map(|s| embed_or_zero(provider, s))
        .collect();
    let mut best = f64::NEG_INFINITY;
    for q in queries {
        for tt in &targets {
            let s = cosine_similarity(q, tt).expect("one provider, one dimension");
            best = best.max(s);
        }
    }
    best
}

/// Maximum cosine similarity between any query text and any target text.
pub fn score_table(
    query_texts: &[String],
    t: &TargetTable,
    provider: &EmbeddingProvider,
) -> Result<TableScore> {
    if query_texts.is_empty() {
        return Err(EnrichError::NoQueryText);
    }
    let queries: Vec<Embedding> = query_texts
        .iter()
        .map(|s| embed_or_zero(provider, s))
        .collect();
    Ok(TableScore {
        table_id: t.id.clone(),
        score: max_pairwise(&queries, t, provider),
    })
}

/// Scores every candidate table and keeps the `m` best, ties broken by id.
pub fn select_tables<'a, I>(
    candidates: I,
    query_texts: &[String],
    corpus: &Corpus,
    provider: &EmbeddingProvider,
    m: usize,
) -> Result<Vec<TableScore>>
where
    I: IntoIterator<Item = &'a str>,
{
    if m == 0 {
        return Err(EnrichError::InvalidM);
    }
    if query_texts.is_empty() {
        return Err(EnrichError::NoQueryText);
    }
    let ids: BTreeSet<&str> = candidates.into_iter().collect();
    let queries: Vec<Embedding> = query_texts
        .iter()
        .map(|s| embed_or_zero(provider, s))
        .collect();
    let tables: Vec<&TargetTable> = ids.iter().filter_map(|id| corpus.get(id)).collect();
    let mut scores: Vec<TableScore> = tables
        .par_iter()
        .map(|t| TableScore {
            table_id: t.id.clone(),
            score: max_pairwise(&queries, t, provider),
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.table_id.cmp(&b.table_id))
    });
    scores.truncate(m);
    Ok(scores)
}
