use serde::{Deserialize, Serialize};

use crate::Scalar;

/// BM25 constants: `k1` saturates term frequency, `b` scales length normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<T> {
    pub k1: T,
    pub b: T,
}

impl<T: Scalar> Default for Bm25Params<T> {
    fn default() -> Self {
        Self {
            k1: T::of(1.2),
            b: T::of(0.75),
        }
    }
}

/// `ln(1 + (N - n + 0.5) / (n + 0.5))`; never negative.
#[inline]
pub fn idf<T: Scalar>(doc_count: usize, doc_freq: usize) -> T {
    let n = T::of_usize(doc_count);
    let df = T::of_usize(doc_freq);
    let half = T::of(0.5);
    (T::one() + (n - df + half) / (df + half)).ln()
}

/// Contribution of one query term to a document's score.
#[inline]
pub fn term_score<T: Scalar>(params: Bm25Params<T>, idf: T, tf: T, doc_len: T, avgdl: T) -> T {
    if tf == T::zero() {
        return T::zero();
    }
    let norm = T::one() - params.b + params.b * doc_len / avgdl;
    idf * tf * (params.k1 + T::one()) / (tf + params.k1 * norm)
}
