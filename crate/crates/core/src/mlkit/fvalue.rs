use super::{FeatureMatrix, MlError, Result, Target};
use crate::Scalar;

/// Per-feature F statistic: one-way ANOVA across classes, or the univariate
/// regression F for a real target. Infinite values become `T::max_value()`.
pub fn f_value_scores<T: Scalar>(x: &FeatureMatrix<T>) -> Result<Vec<T>> {
    let n = x.num_rows();
    match &x.target {
        Target::Regression(y) => {
            let nf = T::of_usize(n);
            let ym = y.iter().copied().sum::<T>() / nf;
            let syy: T = y.iter().map(|&v| (v - ym) * (v - ym)).sum();
            if !(syy > T::zero()) || n < 3 {
                return Err(MlError::DegenerateTarget("target has zero variance".into()));
            }
            let dof = T::of_usize(n - 2);
            Ok(x.values
                .columns()
                .into_iter()
                .map(|col| {
                    let xm = col.iter().copied().sum::<T>() / nf;
                    let sxx: T = col.iter().map(|&v| (v - xm) * (v - xm)).sum();
                    if !(sxx > T::zero()) {
                        return T::zero();
                    }
                    let sxy: T = col.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
                    let r2 = (sxy * sxy / (sxx * syy)).min(T::one());
                    let rest = T::one() - r2;
                    if rest <= T::zero() {
                        T::max_value()
                    } else {
                        (r2 / rest * dof).min(T::max_value())
                    }
                })
                .collect())
        }
        Target::Classification { labels, classes } => {
            let k = classes.len();
            let mut sizes = vec![0usize; k];
            for &l in labels {
                sizes[l] += 1;
            }
            let present = sizes.iter().filter(|&&s| s > 0).count();
            if present < 2 {
                return Err(MlError::DegenerateTarget("fewer than two classes".into()));
            }
            let between_dof = T::of_usize(present - 1);
            let within_dof = T::of_usize(n.saturating_sub(present));
            Ok(x.values
                .columns()
                .into_iter()
                .map(|col| {
                    let nf = T::of_usize(n);
                    let grand = col.iter().copied().sum::<T>() / nf;
                    let mut sums = vec![T::zero(); k];
                    for (&v, &l) in col.iter().zip(labels) {
                        sums[l] += v;
                    }
                    let means: Vec<T> = sums
                        .iter()
                        .zip(&sizes)
                        .map(|(&s, &c)| if c > 0 { s / T::of_usize(c) } else { T::zero() })
                        .collect();
                    let ssb: T = means
                        .iter()
                        .zip(&sizes)
                        .map(|(&m, &c)| T::of_usize(c) * (m - grand) * (m - grand))
                        .sum();
                    let ssw: T = col
                        .iter()
                        .zip(labels)
                        .map(|(&v, &l)| (v - means[l]) * (v - means[l]))
                        .sum();
                    if !(ssb > T::zero()) {
                        T::zero()
                    } else if !(ssw > T::zero()) || within_dof == T::zero() {
                        T::max_value()
                    } else {
                        ((ssb / between_dof) / (ssw / within_dof)).min(T::max_value())
                    }
                })
                .collect())
        }
    }
}
