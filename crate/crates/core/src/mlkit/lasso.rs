use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions<T> {
    pub lambda: T,
    pub tol: T,
    pub max_sweeps: usize,
}

impl<T: Scalar> Default for CdOptions<T> {
    fn default() -> Self {
        Self {
            lambda: T::of(0.01),
            tol: T::of(1e-6),
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdSolution<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective before the first sweep and after each one.
    pub objective: Vec<T>,
}

#[inline]
pub fn soft_threshold<T: Scalar>(rho: T, lambda: T) -> T {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        T::zero()
    }
}

fn objective<T: Scalar>(residual: &[T], weights: &[T], lambda: T) -> T {
    let n = T::of_usize(residual.len());
    let rss: T = residual.iter().map(|&r| r * r).sum();
    let l1: T = weights.iter().map(|w| w.abs()).sum();
    rss / (n + n) + lambda * l1
}

/// Cyclic coordinate descent for `(1/2n)||y - Xw - b||^2 + lambda ||w||_1`
/// with an unpenalized intercept. `columns` holds X column by column.
pub fn coordinate_descent<T: Scalar>(
    columns: &[Vec<T>],
    y: &[T],
    options: &CdOptions<T>,
) -> CdSolution<T> {
    let n = y.len();
    let nf = T::of_usize(n.max(1));
    let p = columns.len();
    let mut weights = vec![T::zero(); p];
    let mut intercept = y.iter().copied().sum::<T>() / nf;
    let mut residual: Vec<T> = y.iter().map(|&v| v - intercept).collect();
    let curvature: Vec<T> = columns
        .iter()
        .map(|c| c.iter().map(|&v| v * v).sum::<T>() / nf)
        .collect();
    let mut history = vec![objective(&residual, &weights, options.lambda)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut max_delta = T::zero();
        for j in 0..p {
            let z = curvature[j];
            if z <= T::zero() {
                continue;
            }
            let col = &columns[j];
            let dot: T = col.iter().zip(&residual).map(|(&x, &r)| x * r).sum();
            let rho = dot / nf + z * weights[j];
            let updated = soft_threshold(rho, options.lambda) / z;
            let delta = updated - weights[j];
            if delta != T::zero() {
                for (r, &x) in residual.iter_mut().zip(col) {
                    *r -= x * delta;
                }
                weights[j] = updated;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let shift = residual.iter().copied().sum::<T>() / nf;
        if shift != T::zero() {
            intercept += shift;
            residual.iter_mut().for_each(|r| *r -= shift);
            max_delta = max_delta.max(shift.abs());
        }
        history.push(objective(&residual, &weights, options.lambda));
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }
    CdSolution {
        weights,
        intercept,
        sweeps,
        converged,
        objective: history,
    }
}

/// Per-column mean and population standard deviation; constant columns get scale 0.
pub(crate) fn standardize<T: Scalar>(x: ArrayView2<T>) -> (Vec<T>, Vec<T>, Vec<Vec<T>>) {
    let n = T::of_usize(x.nrows().max(1));
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    let mut columns = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mean = col.iter().copied().sum::<T>() / n;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let scale = var.sqrt();
        let usable = scale > T::epsilon() * (T::one() + mean.abs());
        means.push(mean);
        if usable {
            scales.push(scale);
            columns.push(col.iter().map(|&v| (v - mean) / scale).collect());
        } else {
            scales.push(T::zero());
            columns.push(vec![T::zero(); x.nrows()]);
        }
    }
    (means, scales, columns)
}

/// L1-regularized linear regression fit on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
    pub standardized_weights: Vec<T>,
    /// Weights and intercept on the original feature scale.
    pub weights: Vec<T>,
    pub intercept: T,
    pub sweeps: usize,
    pub converged: bool,
}

impl<T: Scalar> LassoModel<T> {
    pub fn fit(x: ArrayView2<T>, y: &[T], options: &CdOptions<T>) -> Self {
        assert_eq!(x.nrows(), y.len(), "one target per row");
        let (means, scales, columns) = standardize(x);
        let sol = coordinate_descent(&columns, y, options);
        let weights: Vec<T> = sol
            .weights
            .iter()
            .zip(&scales)
            .map(|(&w, &s)| if s > T::zero() { w / s } else { T::zero() })
            .collect();
        let intercept = sol.intercept - weights.iter().zip(&means).map(|(&w, &m)| w * m).sum::<T>();
        Self {
            means,
            scales,
            standardized_weights: sol.weights,
            weights,
            intercept,
            sweeps: sol.sweeps,
            converged: sol.converged,
        }
    }

    pub fn predict(&self, x: ArrayView2<T>) -> Vec<T> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.weights)
                        .map(|(&v, &w)| v * w)
                        .sum::<T>()
            })
            .collect()
    }
}
