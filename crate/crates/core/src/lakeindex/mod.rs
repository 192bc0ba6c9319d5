//! In-process join-row search over every indexed lake cell.
//!
//! Three structures are built side by side: an inverted index for BM25, a
//! MinHash/LSH banding table for Jaccard candidate generation, and a flat
//! embedding array for exact nearest-neighbour scans. A built [`JoinIndex`]
//! is immutable and can be queried from many threads at once.

mod bm25;
mod minhash;
mod persist;

pub use bm25::{idf, term_score, Bm25Params};
pub use minhash::{
    LshLayout, MinHashSignature, MinHasher, DEFAULT_BANDS, DEFAULT_NUM_HASHES,
    DEFAULT_ROWS_PER_BAND,
};
pub use persist::{load_index, save_index, INDEX_FORMAT_VERSION};

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tablecore::{Corpus, TargetTable};
use crate::textenc::{self, jaccard, tokenize, EmbeddingProvider, TokenSet};
use crate::Embedding;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("corpus has no indexable cells")]
    EmptyCorpus,
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Text(#[from] textenc::TextError),
    #[error("index file: {0}")]
    Format(String),
    #[error("index file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

/// Which columns of each target table hold join-key candidates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyColumns {
    #[default]
    First,
    All,
    /// Columns whose name matches one of these, case-insensitively.
    Named(Vec<String>),
}

impl KeyColumns {
    pub fn select(&self, table: &TargetTable) -> Vec<usize> {
        match self {
            KeyColumns::First => vec![0],
            KeyColumns::All => (0..table.column_names.len()).collect(),
            KeyColumns::Named(names) => table
                .column_names
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    names
                        .iter()
                        .any(|n| n.trim().eq_ignore_ascii_case(c.trim()))
                })
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub table_id: String,
    pub row_index: usize,
    pub column_index: usize,
    pub text: String,
    pub token_list: Vec<String>,
    pub token_set: TokenSet,
    pub embedding: Embedding,
    pub minhash: MinHashSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Jaccard,
    Bm25,
    Semantic,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Jaccard, Measure::Bm25, Measure::Semantic];

    /// Rank used to arbitrate between measures; lower wins.
    pub fn priority(self) -> u8 {
        match self {
            Measure::Jaccard => 0,
            Measure::Bm25 => 1,
            Measure::Semantic => 2,
        }
    }
}

pub type DocId = u32;

/// One retrieved cell. Jaccard scores lie in [0,1], BM25 scores are
/// nonnegative and semantic hits carry the cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc: DocId,
    pub table_id: String,
    pub row_index: usize,
    pub column_index: usize,
    pub score: f64,
    pub measure: Measure,
    /// Euclidean distance for semantic hits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

/// Semantic hits plus a flag raised when the query embedded to the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticHits {
    pub hits: Vec<SearchHit>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc: DocId,
    tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub key_columns: KeyColumns,
    pub seed: u64,
    pub lsh: LshLayout,
    pub bm25: Bm25Params<f64>,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            key_columns: KeyColumns::First,
            seed: 0,
            lsh: LshLayout::default(),
            bm25: Bm25Params::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinIndex {
    params: IndexParams,
    provider: EmbeddingProvider,
    hasher: MinHasher,
    docs: Vec<CellDoc>,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    bands: Vec<HashMap<u64, Vec<DocId>>>,
    /// Row-major `docs.len() × dimension` embedding matrix.
    vectors: Vec<f64>,
}

/// Builds all three indexes with default LSH and BM25 parameters.
pub fn build_index(
    corpus: &Corpus,
    key_columns: KeyColumns,
    provider: EmbeddingProvider,
    seed: u64,
) -> Result<JoinIndex> {
    JoinIndex::build(
        corpus,
        IndexParams {
            key_columns,
            seed,
            ..IndexParams::default()
        },
        provider,
    )
}

impl JoinIndex {
    pub fn build(
        corpus: &Corpus,
        params: IndexParams,
        provider: EmbeddingProvider,
    ) -> Result<Self> {
        let hasher = MinHasher::new(params.lsh.num_hashes(), params.seed);
        let per_table: Vec<Vec<CellDoc>> = corpus
            .tables()
            .par_iter()
            .map(|table| {
                let columns = params.key_columns.select(table);
                let mut docs = Vec::with_capacity(table.num_rows() * columns.len());
                for (row_index, row) in table.rows.iter().enumerate() {
                    for &column_index in &columns {
                        let text = row[column_index].clone();
                        let tokens = tokenize(&text);
                        let embedding = provider.embed(&text)?;
                        let minhash = hasher.signature(&tokens.set);
                        docs.push(CellDoc {
                            table_id: table.id.clone(),
                            row_index,
                            column_index,
                            text,
                            token_list: tokens.list,
                            token_set: tokens.set,
                            embedding,
                            minhash,
                        });
                    }
                }
                Ok(docs)
            })
            .collect::<Result<_>>()?;
        let docs: Vec<CellDoc> = per_table.into_iter().flatten().collect();
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut bands = vec![HashMap::<u64, Vec<DocId>>::new(); params.lsh.bands];
        let dim = provider.dimension();
        let mut vectors = Vec::with_capacity(docs.len() * dim);
        for (id, doc) in docs.iter().enumerate() {
            let id = id as DocId;
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &doc.token_list {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            let mut terms: Vec<_> = tf.into_iter().collect();
            terms.sort_unstable();
            for (term, tf) in terms {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc: id, tf });
            }
            doc_lengths.push(doc.token_list.len() as u32);
            for (band, key) in params.lsh.band_keys(&doc.minhash).enumerate() {
                bands[band].entry(key).or_default().push(id);
            }
            vectors.extend_from_slice(doc.embedding.values());
        }
        let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / docs.len() as f64;

        Ok(Self {
            params,
            provider,
            hasher,
            docs,
            postings,
            doc_lengths,
            avgdl,
            bands,
            vectors,
        })
    }

    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn provider(&self) -> &EmbeddingProvider {
        &self.provider
    }

    pub fn docs(&self) -> &[CellDoc] {
        &self.docs
    }

    pub fn doc(&self, id: DocId) -> &CellDoc {
        &self.docs[id as usize]
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_length(&self, id: DocId) -> usize {
        self.doc_lengths[id as usize] as usize
    }

    /// Number of indexed documents containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Sorted doc ids sharing the bucket of `doc` in each band.
    pub fn band_members(&self, band: usize, key: u64) -> &[DocId] {
        self.bands[band].get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn minhasher(&self) -> &MinHasher {
        &self.hasher
    }

    fn hit(&self, doc: DocId, score: f64, measure: Measure) -> SearchHit {
        let d = self.doc(doc);
        SearchHit {
            doc,
            table_id: d.table_id.clone(),
            row_index: d.row_index,
            column_index: d.column_index,
            score,
            measure,
            distance: None,
        }
    }

    fn location_order(&self, a: DocId, b: DocId) -> Ordering {
        let (x, y) = (self.doc(a), self.doc(b));
        x.table_id
            .cmp(&y.table_id)
            .then(x.row_index.cmp(&y.row_index))
            .then(x.column_index.cmp(&y.column_index))
    }

    /// Keeps the `k` best `(doc, score)` pairs by descending score, ties by location.
    fn top_k_descending(&self, mut scored: Vec<(DocId, f64)>, k: usize) -> Vec<(DocId, f64)> {
        let cmp = |a: &(DocId, f64), b: &(DocId, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.location_order(a.0, b.0))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        scored
    }

    /// BM25 over the inverted index. Documents sharing no query term are excluded.
    pub fn search_bm25(&self, query: &str, k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let terms = tokenize(query).list;
        if terms.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let n = self.docs.len();
        let p = self.params.bm25;
        let mut acc: HashMap<DocId, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let w: f64 = idf(n, list.len());
            for post in list {
                let dl = self.doc_lengths[post.doc as usize] as f64;
                *acc.entry(post.doc).or_default() +=
                    term_score(p, w, post.tf as f64, dl, self.avgdl);
            }
        }
        let scored: Vec<_> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        Ok(self
            .top_k_descending(scored, k)
            .into_iter()
            .map(|(d, s)| self.hit(d, s, Measure::Bm25))
            .collect())
    }

    /// LSH candidates re-scored by exact Jaccard; zero-overlap candidates are dropped.
    pub fn search_jaccard(&self, query: &str, k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let tokens = tokenize(query).set;
        if tokens.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let sig = self.hasher.signature(&tokens);
        let mut candidates: HashSet<DocId> = HashSet::new();
        for (band, key) in self.params.lsh.band_keys(&sig).enumerate() {
            candidates.extend(self.band_members(band, key));
        }
        let scored: Vec<_> = candidates
            .into_iter()
            .map(|d| (d, jaccard(&tokens, &self.doc(d).token_set)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        Ok(self
            .top_k_descending(scored, k)
            .into_iter()
            .map(|(d, s)| self.hit(d, s, Measure::Jaccard))
            .collect())
    }

    /// Exact scan by ascending Euclidean distance.
    pub fn search_semantic(&self, query: &str, k: usize) -> Result<SemanticHits> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let q: Embedding = self.provider.embed(query)?;
        let dim = self.provider.dimension();
        let qv = q.values();
        let mut scored: Vec<(DocId, f64)> = self
            .vectors
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, v)| {
                let d2: f64 = v.iter().zip(qv).map(|(a, b)| (a - b) * (a - b)).sum();
                (i as DocId, d2.sqrt())
            })
            .collect();
        let cmp = |a: &(DocId, f64), b: &(DocId, f64)| {
            a.1.total_cmp(&b.1)
                .then_with(|| self.location_order(a.0, b.0))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        let hits = scored
            .into_iter()
            .map(|(d, dist)| {
                let cos = textenc::cosine_similarity(&q, &self.doc(d).embedding)?;
                let mut hit = self.hit(d, cos, Measure::Semantic);
                hit.distance = Some(dist);
                Ok(hit)
            })
            .collect::<Result<_>>()?;
        Ok(SemanticHits {
            hits,
            low_confidence: q.is_zero(),
        })
    }

    /// Dispatches to the search for `measure`.
    pub fn search(&self, measure: Measure, query: &str, k: usize) -> Result<Vec<SearchHit>> {
        match measure {
            Measure::Jaccard => self.search_jaccard(query, k),
            Measure::Bm25 => self.search_bm25(query, k),
            Measure::Semantic => self.search_semantic(query, k).map(|s| s.hits),
        }
    }
}
