//! Tokenization, deterministic text embeddings and the scalar similarity
//! measures used by join-row search and table selection.

mod embed;
mod similarity;
mod tokenize;

pub use embed::{EmbeddingProvider, EmbeddingVector, ProviderKind, DEFAULT_DIMENSION};
pub use similarity::{cosine_similarity, jaccard, semantic_distance};
pub use tokenize::{tokenize, TokenSet, Tokens};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no token of '{0}' is in the word-vector vocabulary")]
    UnknownToken(String),
    #[error("word-vector file line {line}: {reason}")]
    WordVectorFormat { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TextError> = std::result::Result<T, E>;

/// FNV-1a over `bytes` mixed with `seed`, finished with the splitmix64
/// avalanche so low bits are usable as bucket indices.
pub(crate) fn hash64(bytes: &[u8], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
