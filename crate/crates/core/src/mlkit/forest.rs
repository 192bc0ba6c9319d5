use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::textenc::mix64;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` picks the task default.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestTask {
    Regression,
    Classification { num_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<T> {
    /// Mean target (regression) or class distribution (classification).
    Leaf { value: Vec<T> },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub nodes: Vec<TreeNode<T>>,
    /// Total impurity decrease contributed by each feature.
    pub impurity_decrease: Vec<T>,
}

#[derive(Clone, Copy)]
enum Labels<'a, T> {
    Values(&'a [T]),
    Classes(&'a [usize], usize),
}

/// Running sums for one side of a candidate split.
struct Stats<T> {
    sum: T,
    sumsq: T,
    counts: Vec<T>,
}

impl<T: Scalar> Stats<T> {
    fn new(labels: Labels<'_, T>) -> Self {
        let k = match labels {
            Labels::Values(_) => 0,
            Labels::Classes(_, k) => k,
        };
        Self {
            sum: T::zero(),
            sumsq: T::zero(),
            counts: vec![T::zero(); k],
        }
    }

    fn add(&mut self, labels: Labels<'_, T>, sample: usize, sign: T) {
        match labels {
            Labels::Values(y) => {
                self.sum += sign * y[sample];
                self.sumsq += sign * y[sample] * y[sample];
            }
            Labels::Classes(c, _) => self.counts[c[sample]] += sign,
        }
    }

    /// `sum y^2 / n`-style proxy; larger children proxies mean lower impurity.
    fn proxy(&self, labels: Labels<'_, T>, n: T) -> T {
        match labels {
            Labels::Values(_) => self.sum * self.sum / n,
            Labels::Classes(..) => self.counts.iter().map(|&c| c * c).sum::<T>() / n,
        }
    }

    /// Impurity times sample count (SSE or n * Gini).
    fn weighted_impurity(&self, labels: Labels<'_, T>, n: T) -> T {
        let v = match labels {
            Labels::Values(_) => self.sumsq - self.sum * self.sum / n,
            Labels::Classes(..) => n - self.counts.iter().map(|&c| c * c).sum::<T>() / n,
        };
        v.max(T::zero())
    }
}

struct Grower<'a, T> {
    x: ArrayView2<'a, T>,
    labels: Labels<'a, T>,
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    proxy: T,
}

impl<T: Scalar> Grower<'_, T> {
    fn leaf_value(&self, samples: &[usize]) -> Vec<T> {
        let n = T::of_usize(samples.len());
        match self.labels {
            Labels::Values(y) => vec![samples.iter().map(|&s| y[s]).sum::<T>() / n],
            Labels::Classes(c, k) => {
                let mut v = vec![T::zero(); k];
                for &s in samples {
                    v[c[s]] += T::one();
                }
                v.iter_mut().for_each(|x| *x /= n);
                v
            }
        }
    }

    fn is_pure(&self, samples: &[usize]) -> bool {
        match self.labels {
            Labels::Values(y) => samples.iter().all(|&s| y[s] == y[samples[0]]),
            Labels::Classes(c, _) => samples.iter().all(|&s| c[s] == c[samples[0]]),
        }
    }

    fn best_split(&self, samples: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit<T>> {
        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        if self.mtry < p {
            features.shuffle(rng);
        }
        let n = samples.len();
        let mut total = Stats::new(self.labels);
        for &s in samples {
            total.add(self.labels, s, T::one());
        }
        let mut best: Option<BestSplit<T>> = None;
        let mut visited = 0;
        for f in features {
            if visited >= self.mtry {
                break;
            }
            let mut order: Vec<usize> = samples.to_vec();
            order.sort_by(|&a, &b| {
                self.x[[a, f]]
                    .partial_cmp(&self.x[[b, f]])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let lo = self.x[[order[0], f]];
            let hi = self.x[[order[n - 1], f]];
            if !(lo < hi) {
                continue;
            }
            visited += 1;
            let mut left = Stats::new(self.labels);
            for i in 0..n - 1 {
                left.add(self.labels, order[i], T::one());
                let pos = i + 1;
                let a = self.x[[order[i], f]];
                let b = self.x[[order[pos], f]];
                if !(a < b) || pos < self.min_leaf || n - pos < self.min_leaf {
                    continue;
                }
                let nl = T::of_usize(pos);
                let nr = T::of_usize(n - pos);
                let right = Stats {
                    sum: total.sum - left.sum,
                    sumsq: total.sumsq - left.sumsq,
                    counts: total
                        .counts
                        .iter()
                        .zip(&left.counts)
                        .map(|(&t, &l)| t - l)
                        .collect(),
                };
                let proxy = left.proxy(self.labels, nl) + right.proxy(self.labels, nr);
                if best.as_ref().is_none_or(|b| proxy > b.proxy) {
                    let mut threshold = (a + b) / (T::one() + T::one());
                    if !(threshold < b) {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        proxy,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree<T> {
        let mut nodes: Vec<TreeNode<T>> = Vec::new();
        let mut decrease = vec![T::zero(); self.x.ncols()];
        // (node slot, samples, depth)
        let mut stack = vec![(0usize, samples, 0usize)];
        nodes.push(TreeNode::Leaf { value: vec![] });
        while let Some((slot, samples, depth)) = stack.pop() {
            let n = samples.len();
            let can_split = n >= 2 * self.min_leaf
                && self.max_depth.is_none_or(|d| depth < d)
                && !self.is_pure(&samples);
            let split = if can_split {
                self.best_split(&samples, rng)
            } else {
                None
            };
            let Some(split) = split else {
                nodes[slot] = TreeNode::Leaf {
                    value: self.leaf_value(&samples),
                };
                continue;
            };
            let (left_samples, right_samples): (Vec<usize>, Vec<usize>) = samples
                .iter()
                .partition(|&&s| self.x[[s, split.feature]] <= split.threshold);
            let impurity = |part: &[usize]| {
                let mut st = Stats::new(self.labels);
                for &s in part {
                    st.add(self.labels, s, T::one());
                }
                st.weighted_impurity(self.labels, T::of_usize(part.len()))
            };
            let gain = impurity(&samples) - impurity(&left_samples) - impurity(&right_samples);
            decrease[split.feature] += gain.max(T::zero());
            let left = nodes.len();
            let right_slot = left + 1;
            nodes.push(TreeNode::Leaf { value: vec![] });
            nodes.push(TreeNode::Leaf { value: vec![] });
            nodes[slot] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right: right_slot,
            };
            stack.push((right_slot, right_samples, depth + 1));
            stack.push((left, left_samples, depth + 1));
        }
        DecisionTree {
            nodes,
            impurity_decrease: decrease,
        }
    }
}

impl<T: Scalar> DecisionTree<T> {
    pub fn leaf_for(&self, row: &[T]) -> &[T] {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<T> {
    pub params: ForestParams,
    pub task: ForestTask,
    pub seed: u64,
    pub trees: Vec<DecisionTree<T>>,
    /// Mean impurity decrease per feature, normalized to sum 1 when any split exists.
    pub importances: Vec<T>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(tree as u64 + 1)))
}

fn normalized<T: Scalar>(v: &[T]) -> Vec<T> {
    let s: T = v.iter().copied().sum();
    if s > T::zero() {
        v.iter().map(|&x| x / s).collect()
    } else {
        vec![T::zero(); v.len()]
    }
}

impl<T: Scalar> RandomForest<T> {
    pub fn fit_regression(x: ArrayView2<T>, y: &[T], params: &ForestParams, seed: u64) -> Self {
        Self::fit(x, Labels::Values(y), ForestTask::Regression, params, seed)
    }

    pub fn fit_classification(
        x: ArrayView2<T>,
        labels: &[usize],
        num_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        Self::fit(
            x,
            Labels::Classes(labels, num_classes),
            ForestTask::Classification { num_classes },
            params,
            seed,
        )
    }

    fn fit(
        x: ArrayView2<T>,
        labels: Labels<'_, T>,
        task: ForestTask,
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let n = x.nrows();
        let p = x.ncols();
        assert!(n > 0, "forest needs at least one row");
        let default_mtry = match task {
            ForestTask::Regression => p.div_ceil(3),
            ForestTask::Classification { .. } => (p as f64).sqrt().ceil() as usize,
        };
        let grower = Grower {
            x,
            labels,
            mtry: params
                .max_features
                .unwrap_or(default_mtry)
                .clamp(1, p.max(1)),
            min_leaf: params.min_samples_leaf.max(1),
            max_depth: params.max_depth,
        };
        let trees: Vec<DecisionTree<T>> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let samples: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grower.grow(samples, &mut rng)
            })
            .collect();
        let mut importances = vec![T::zero(); p];
        for tree in &trees {
            for (acc, v) in importances
                .iter_mut()
                .zip(normalized(&tree.impurity_decrease))
            {
                *acc += v;
            }
        }
        Self {
            params: *params,
            task,
            seed,
            trees,
            importances: normalized(&importances),
        }
    }

    fn mean_leaf(&self, row: &[T]) -> Vec<T> {
        let width = match self.task {
            ForestTask::Regression => 1,
            ForestTask::Classification { num_classes } => num_classes,
        };
        let mut acc = vec![T::zero(); width];
        for tree in &self.trees {
            for (a, &v) in acc.iter_mut().zip(tree.leaf_for(row)) {
                *a += v;
            }
        }
        let nt = T::of_usize(self.trees.len().max(1));
        acc.iter_mut().for_each(|a| *a /= nt);
        acc
    }

    pub fn predict_values(&self, x: ArrayView2<T>) -> Vec<T> {
        x.rows()
            .into_iter()
            .map(|r| self.mean_leaf(&r.to_vec())[0])
            .collect()
    }

    pub fn predict_classes(&self, x: ArrayView2<T>) -> Vec<usize> {
        x.rows()
            .into_iter()
            .map(|r| {
                let probs = self.mean_leaf(&r.to_vec());
                let mut best = 0;
                for c in 1..probs.len() {
                    if probs[c] > probs[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}
