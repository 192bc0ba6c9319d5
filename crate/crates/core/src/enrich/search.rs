use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnrichError, Result};
use crate::lakeindex::{IndexError, JoinIndex, Measure, SearchHit};
use crate::tablecore::QueryTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub query_row: usize,
    pub hit: SearchHit,
}

/// `true` when `a` should be kept over `b` for the same target row.
pub(crate) fn outranks(a: &SearchHit, b: &SearchHit) -> bool {
    (a.measure.priority(), -a.score, a.row_index) < (b.measure.priority(), -b.score, b.row_index)
}

fn row_candidates(
    index: &JoinIndex,
    query_row: usize,
    key: &str,
    k: usize,
) -> Result<Vec<CandidateMatch>> {
    let mut hits = Vec::with_capacity(3 * k);
    for measure in Measure::ALL {
        let found = match measure {
            Measure::Semantic => {
                let res = index.search_semantic(key, k)?;
                // a zero query vector ranks every cell equally far away
                if res.low_confidence {
                    vec![]
                } else {
                    res.hits
                }
            }
            m => match index.search(m, key, k) {
                Err(IndexError::EmptyQuery) => vec![],
                other => other?,
            },
        };
        hits.extend(found);
    }
    let mut best: HashMap<(String, usize), SearchHit> = HashMap::new();
    for hit in hits {
        let slot = (hit.table_id.clone(), hit.row_index);
        match best.get(&slot) {
            Some(kept) if !outranks(&hit, kept) => {}
            _ => {
                best.insert(slot, hit);
            }
        }
    }
    let mut out: Vec<CandidateMatch> = best
        .into_values()
        .map(|hit| CandidateMatch { query_row, hit })
        .collect();
    out.sort_by(|a, b| {
        (a.hit.measure.priority(), &a.hit.table_id, a.hit.row_index).cmp(&(
            b.hit.measure.priority(),
            &b.hit.table_id,
            b.hit.row_index,
        ))
    });
    Ok(out)
}

/// Top-`k` cells per measure for every query key cell, unioned per query row
/// and de-duplicated by target `(table, row)`.
///
/// When several measures retrieve the same target row the record of the
/// highest-priority measure (Jaccard, then BM25, then semantic) is kept.
pub fn join_row_search(index: &JoinIndex, q: &QueryTable, k: usize) -> Result<Vec<CandidateMatch>> {
    if k == 0 {
        return Err(EnrichError::InvalidK);
    }
    if index.doc_count() == 0 {
        return Err(EnrichError::IndexEmpty);
    }
    let per_row: Vec<Vec<CandidateMatch>> = (0..q.num_rows())
        .into_par_iter()
        .map(|row| row_candidates(index, row, q.key_cell(row), k))
        .collect::<Result<_>>()?;
    Ok(per_row.into_iter().flatten().collect())
}
