use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{hash64, tokenize, Result, TextError};
use crate::Scalar;

pub const DEFAULT_DIMENSION: usize = 64;
const MIN_GRAM: usize = 3;
const MAX_GRAM: usize = 5;

/// Fixed-length embedding with its cached Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
    norm: T,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        Self { values, norm }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![T::zero(); dim],
            norm: T::zero(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> T {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.norm == T::zero()
    }

    pub(crate) fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HashedSubword,
    WordVectorFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WordVectors {
    table: HashMap<String, Vec<f64>>,
    hashed_fallback: bool,
}

/// Deterministic text encoder.
///
/// The default hashes character 3-5 grams of every boundary-marked token into
/// `dimension` signed buckets, averages the token vectors and L2-normalizes.
/// The word-vector variant averages vectors loaded from a text file and falls
/// back to the hashed encoder for out-of-vocabulary tokens when enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProvider {
    dimension: usize,
    seed: u64,
    word_vectors: Option<WordVectors>,
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        Self::hashed(DEFAULT_DIMENSION, 0)
    }
}

impl EmbeddingProvider {
    pub fn hashed(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            seed,
            word_vectors: None,
        }
    }

    /// Parses the `token v1 ... vD` text format with an optional `N D` header line.
    pub fn from_word_vectors<R: BufRead>(reader: R, hashed_fallback: bool) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dimension = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                dimension = Some(fields[1].parse::<usize>().expect("checked above"));
                continue;
            }
            let format_err = |reason: String| TextError::WordVectorFormat {
                line: i + 1,
                reason,
            };
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format_err(e.to_string()))?;
            match dimension {
                None => dimension = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(format_err(format!(
                        "expected {d} values, found {}",
                        values.len()
                    )))
                }
                _ => {}
            }
            table.insert(fields[0].to_lowercase(), values);
        }
        let dimension =
            dimension
                .filter(|&d| d > 0)
                .ok_or_else(|| TextError::WordVectorFormat {
                    line: 0,
                    reason: "no vectors".into(),
                })?;
        Ok(Self {
            dimension,
            seed: 0,
            word_vectors: Some(WordVectors {
                table,
                hashed_fallback,
            }),
        })
    }

    pub fn kind(&self) -> ProviderKind {
        if self.word_vectors.is_some() {
            ProviderKind::WordVectorFile
        } else {
            ProviderKind::HashedSubword
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embed<T: Scalar>(&self, text: &str) -> Result<EmbeddingVector<T>> {
        let tokens = tokenize(text).list;
        if tokens.is_empty() {
            return Ok(EmbeddingVector::zeros(self.dimension));
        }
        let mut acc = vec![0f64; self.dimension];
        let mut used = 0usize;
        for token in &tokens {
            let known = self
                .word_vectors
                .as_ref()
                .and_then(|wv| wv.table.get(token.as_str()));
            match (known, &self.word_vectors) {
                (Some(v), _) => {
                    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                    used += 1;
                }
                (None, Some(wv)) if !wv.hashed_fallback => {}
                _ => {
                    self.add_hashed_token(token, &mut acc);
                    used += 1;
                }
            }
        }
        if used == 0 {
            return Err(TextError::UnknownToken(text.to_string()));
        }
        let scale = 1.0 / used as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(EmbeddingVector::zeros(self.dimension));
        }
        Ok(EmbeddingVector::from_values(
            acc.into_iter().map(|a| T::of(a / norm)).collect(),
        ))
    }

    fn add_hashed_token(&self, token: &str, acc: &mut [f64]) {
        let marked: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        let mut buf = String::new();
        for n in MIN_GRAM..=MAX_GRAM {
            for gram in marked.windows(n) {
                buf.clear();
                buf.extend(gram);
                let h = hash64(buf.as_bytes(), self.seed);
                let bucket = (h % self.dimension as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                acc[bucket] += sign;
            }
        }
    }
}
