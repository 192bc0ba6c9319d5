use super::{EmbeddingVector, Result, TextError, TokenSet};
use crate::Scalar;

/// Set overlap |a ∩ b| / |a ∪ b|; two empty sets score 0.
pub fn jaccard(a: &TokenSet, b: &TokenSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn check_dims<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(TextError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(())
}

/// Euclidean distance between two embeddings.
pub fn semantic_distance<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T> {
    check_dims(u, v)?;
    Ok(u.values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt())
}

/// Cosine of the angle between two embeddings; 0 when either is the zero vector.
pub fn cosine_similarity<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<T> {
    check_dims(u, v)?;
    if u.norm() == T::zero() || v.norm() == T::zero() {
        return Ok(T::zero());
    }
    let c = u.dot(v) / (u.norm() * v.norm());
    Ok(c.max(-T::one()).min(T::one()))
}
