use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Sum of squared distances after every assignment step.
    pub objective_history: Vec<T>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// `k` is clamped to the number of points. Stops after `max_iter` rounds or
/// once no centroid moves more than `tol`.
pub fn kmeans<T: Scalar>(
    points: &[Vec<T>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: T,
) -> KMeansResult<T> {
    let k = k.clamp(1, points.len().max(1));
    if points.is_empty() {
        return KMeansResult {
            assignments: vec![],
            centroids: vec![],
            objective_history: vec![],
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| nearest(p, &centroids).1.as_f64())
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // all remaining points coincide with a centroid
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 && target < *w {
                chosen = i;
                break;
            }
            target -= w;
        }
        if weights[chosen] <= 0.0 {
            chosen = weights.iter().rposition(|&w| w > 0.0).expect("total > 0");
        }
        centroids.push(points[chosen].clone());
    }

    let dim = points[0].len();
    let mut assignments = vec![0; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut objective = T::zero();
        for (a, p) in assignments.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            *a = c;
            objective += d;
        }
        history.push(objective);

        let mut sums = vec![vec![T::zero(); dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, &x)| *s += x);
        }
        let mut shift = T::zero();
        for (c, (sum, &n)) in sums.into_iter().zip(&counts).enumerate() {
            if n == 0 {
                continue;
            }
            let inv = T::one() / T::of_usize(n);
            let updated: Vec<T> = sum.into_iter().map(|s| s * inv).collect();
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        if shift < tol {
            break;
        }
    }
    KMeansResult {
        assignments,
        centroids,
        objective_history: history,
    }
}
