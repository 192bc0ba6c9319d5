use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "macroF1")]
    MacroF1,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::MacroF1)
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mse => "MSE",
            Metric::Rmse => "RMSE",
            Metric::MacroF1 => "macroF1",
        }
    }
}

pub fn mse<T: Scalar>(truth: &[T], pred: &[T]) -> T {
    assert_eq!(truth.len(), pred.len(), "equal lengths");
    if truth.is_empty() {
        return T::zero();
    }
    let s: T = truth
        .iter()
        .zip(pred)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    s / T::of_usize(truth.len())
}

pub fn rmse<T: Scalar>(truth: &[T], pred: &[T]) -> T {
    mse(truth, pred).sqrt()
}

/// Unweighted mean of per-class F1 over every label seen in either vector.
/// A class with no true and no predicted positives cannot occur; a class with
/// zero precision and recall scores 0.
pub fn macro_f1<L: Ord + Clone>(truth: &[L], pred: &[L]) -> f64 {
    assert_eq!(truth.len(), pred.len(), "equal lengths");
    let labels: BTreeSet<&L> = truth.iter().chain(pred).collect();
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .map(|&c| {
            let tp = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t == c && *p == c)
                .count();
            let fp = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t != c && *p == c)
                .count();
            let fn_ = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t == c && *p != c)
                .count();
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    total / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_case() {
        let f = macro_f1(&["A", "B", "B"], &["A", "A", "B"]);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_zero() {
        assert_eq!(macro_f1(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(macro_f1(&[1, 1], &[2, 2]), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]), 12.5f64.sqrt());
    }

    proptest! {
        #[test]
        fn f1_invariant_to_renaming(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..40)) {
            let truth: Vec<u8> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let rename = |v: &Vec<u8>| v.iter().map(|&x| (3 - x) * 10).collect::<Vec<u8>>();
            let a = macro_f1(&truth, &pred);
            let b = macro_f1(&rename(&truth), &rename(&pred));
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn rmse_is_root_of_mse(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..30)) {
            let t: Vec<f64> = v.iter().map(|p| p.0).collect();
            let p: Vec<f64> = v.iter().map(|p| p.1).collect();
            prop_assert_eq!(rmse(&t, &p), mse(&t, &p).sqrt());
            prop_assert_eq!(mse(&t, &t), 0.0);
        }
    }
}
