use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textenc::{hash64, mix64, TokenSet};

pub const DEFAULT_NUM_HASHES: usize = 128;
pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_ROWS_PER_BAND: usize = 8;

/// One 64-bit minimum per hash function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MinHashSignature(pub Vec<u64>);

impl MinHashSignature {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of positions where both signatures agree; estimates Jaccard.
    pub fn agreement(&self, other: &Self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let same = self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count();
        same as f64 / self.0.len() as f64
    }
}

/// Seeded family of hash functions `h_i(t) = mix(base(t) ^ salt_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinHasher {
    seed: u64,
    salts: Vec<u64>,
}

impl MinHasher {
    pub fn new(num_hashes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            seed,
            salts: (0..num_hashes).map(|_| rng.random()).collect(),
        }
    }

    pub fn num_hashes(&self) -> usize {
        self.salts.len()
    }

    /// Signature of a token set. The empty set maps to all-`u64::MAX`.
    pub fn signature(&self, tokens: &TokenSet) -> MinHashSignature {
        let mut mins = vec![u64::MAX; self.salts.len()];
        for token in tokens.iter() {
            let base = hash64(token.as_bytes(), self.seed);
            for (m, &salt) in mins.iter_mut().zip(&self.salts) {
                let h = mix64(base ^ salt);
                if h < *m {
                    *m = h;
                }
            }
        }
        MinHashSignature(mins)
    }
}

/// Banding layout: `bands` groups of `rows` consecutive signature values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshLayout {
    pub bands: usize,
    pub rows: usize,
}

impl Default for LshLayout {
    fn default() -> Self {
        Self {
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS_PER_BAND,
        }
    }
}

impl LshLayout {
    pub fn num_hashes(&self) -> usize {
        self.bands * self.rows
    }

    /// Probability that a pair with Jaccard `s` shares at least one bucket.
    pub fn candidate_probability(&self, s: f64) -> f64 {
        1.0 - (1.0 - s.powi(self.rows as i32)).powi(self.bands as i32)
    }

    /// Bucket key of every band of `sig`.
    pub fn band_keys<'a>(&self, sig: &'a MinHashSignature) -> impl Iterator<Item = u64> + 'a {
        let rows = self.rows;
        sig.0.chunks(rows).enumerate().map(move |(band, chunk)| {
            let mut bytes = Vec::with_capacity(rows * 8);
            for v in chunk {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            hash64(&bytes, band as u64)
        })
    }
}
