use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::lasso::{soft_threshold, standardize, CdOptions};
use crate::Scalar;

#[inline]
fn sigmoid<T: Scalar>(f: T) -> T {
    if f >= T::zero() {
        T::one() / (T::one() + (-f).exp())
    } else {
        let e = f.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BinaryFit<T> {
    weights: Vec<T>,
    intercept: T,
    sweeps: usize,
    converged: bool,
}

/// Majorize-minimize coordinate descent for L1 logistic loss; the logistic
/// curvature is bounded by 1/4 so each coordinate gets a fixed quadratic bound.
fn fit_binary<T: Scalar>(columns: &[Vec<T>], y: &[T], options: &CdOptions<T>) -> BinaryFit<T> {
    let n = y.len();
    let nf = T::of_usize(n.max(1));
    let quarter = T::of(0.25);
    let mut weights = vec![T::zero(); columns.len()];
    let mut intercept = T::zero();
    let mut f = vec![T::zero(); n];
    let curvature: Vec<T> = columns
        .iter()
        .map(|c| c.iter().map(|&v| v * v).sum::<T>() / nf)
        .collect();
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut max_delta = T::zero();
        for (j, col) in columns.iter().enumerate() {
            if curvature[j] <= T::zero() {
                continue;
            }
            let bound = curvature[j] * quarter;
            let grad: T = col
                .iter()
                .zip(&f)
                .zip(y)
                .map(|((&x, &fi), &yi)| x * (sigmoid(fi) - yi))
                .sum::<T>()
                / nf;
            let updated = soft_threshold(weights[j] - grad / bound, options.lambda / bound);
            let delta = updated - weights[j];
            if delta != T::zero() {
                for (fi, &x) in f.iter_mut().zip(col) {
                    *fi += x * delta;
                }
                weights[j] = updated;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let grad: T = f
            .iter()
            .zip(y)
            .map(|(&fi, &yi)| sigmoid(fi) - yi)
            .sum::<T>()
            / nf;
        let delta = -grad / quarter;
        if delta != T::zero() {
            intercept += delta;
            f.iter_mut().for_each(|fi| *fi += delta);
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }
    BinaryFit {
        weights,
        intercept,
        sweeps,
        converged,
    }
}

/// One-vs-rest L1 logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
    pub num_classes: usize,
    /// `standardized_weights[c][j]` for class `c`.
    pub standardized_weights: Vec<Vec<T>>,
    pub intercepts: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> LogisticModel<T> {
    pub fn fit(
        x: ArrayView2<T>,
        labels: &[usize],
        num_classes: usize,
        options: &CdOptions<T>,
    ) -> Self {
        assert_eq!(x.nrows(), labels.len(), "one label per row");
        let (means, scales, columns) = standardize(x);
        let fits: Vec<BinaryFit<T>> = (0..num_classes)
            .map(|c| {
                let y: Vec<T> = labels
                    .iter()
                    .map(|&l| if l == c { T::one() } else { T::zero() })
                    .collect();
                fit_binary(&columns, &y, options)
            })
            .collect();
        Self {
            means,
            scales,
            num_classes,
            converged: fits.iter().all(|f| f.converged),
            intercepts: fits.iter().map(|f| f.intercept).collect(),
            standardized_weights: fits.into_iter().map(|f| f.weights).collect(),
        }
    }

    /// Per-class decision values for one row.
    pub fn decision(&self, row: &[T]) -> Vec<T> {
        (0..self.num_classes)
            .map(|c| {
                let mut f = self.intercepts[c];
                for (j, &v) in row.iter().enumerate() {
                    if self.scales[j] > T::zero() {
                        f += self.standardized_weights[c][j] * (v - self.means[j]) / self.scales[j];
                    }
                }
                f
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Vec<usize> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row: Vec<T> = row.to_vec();
                let d = self.decision(&row);
                let mut best = 0;
                for c in 1..d.len() {
                    if d[c] > d[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}
