//! Self-contained extremely randomized trees classifier (the fitness
//! evaluator and final predictor) and a 1-nearest-neighbor baseline.
//!
//! The forest follows the classic construction: every tree is trained on
//! the full (unbootstrapped) set; at each node `max(1, floor(sqrt(d)))`
//! candidate features are drawn without replacement, one uniform random
//! cut-point per candidate within the node-local [min, max), and the best
//! candidate by Gini impurity decrease wins. All tie-breaks go to the
//! lowest index so training is fully deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::util::{derive_seed, sample_without_replacement};

/// Row-major feature matrix with labels carried alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize, labels: Vec<usize>) -> FeatureMatrix {
        assert_eq!(data.len(), n_rows * n_cols);
        assert_eq!(labels.len(), n_rows);
        FeatureMatrix { data, n_rows, n_cols, labels }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> FeatureMatrix {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols);
            data.extend(r);
        }
        FeatureMatrix::new(data, n_rows, n_cols, labels)
    }

    /// Raw series values as features (baseline protocols).
    pub fn from_dataset_raw(d: &Dataset) -> FeatureMatrix {
        let rows = d.series().iter().map(|s| s.values.clone()).collect();
        FeatureMatrix::from_rows(rows, d.labels())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The sub-matrix addressed by `indices` (rows copied in order).
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        FeatureMatrix::new(data, indices.len(), self.n_cols, labels)
    }
}

/// One node of a decision tree, stored in a flat arena.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum SplitNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: Vec<u32> },
}

/// A single extremely randomized tree; node 0 is the root.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<SplitNode>,
}

impl DecisionTree {
    fn leaf_for(&self, row: &[f64]) -> &[u32] {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                SplitNode::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] < *threshold { *left } else { *right };
                }
                SplitNode::Leaf { counts } => return counts,
            }
        }
    }

    /// Length of the longest root-to-leaf path in comparisons.
    pub fn max_depth(&self) -> usize {
        fn walk(nodes: &[SplitNode], idx: usize) -> usize {
            match &nodes[idx] {
                SplitNode::Leaf { .. } => 0,
                SplitNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// A fitted forest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExtraTreesModel {
    pub format_version: u32,
    pub n_classes: usize,
    pub n_features: usize,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

fn gini(counts: &[u32], total: u32) -> f64 {
    let t = f64::from(total);
    1.0 - counts.iter().map(|&c| (f64::from(c) / t).powi(2)).sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    n_classes: usize,
    k_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<SplitNode>,
}

impl<'a> TreeBuilder<'a> {
    fn class_counts(&self, rows: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &r in rows {
            counts[self.x.labels()[r]] += 1;
        }
        counts
    }

    fn build(&mut self, rows: Vec<usize>) -> usize {
        let counts = self.class_counts(&rows);
        let n = rows.len() as u32;
        let n_nonzero = counts.iter().filter(|&&c| c > 0).count();
        if rows.len() < 2 || n_nonzero <= 1 {
            self.nodes.push(SplitNode::Leaf { counts });
            return self.nodes.len() - 1;
        }

        // Candidate features, drawn without replacement then evaluated in
        // ascending order so score ties resolve to the lowest feature index.
        let d = self.x.n_cols();
        let mut candidates = sample_without_replacement(&mut self.rng, d, self.k_features);
        candidates.sort_unstable();

        let parent_gini = gini(&counts, n);
        let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
        for &f in &candidates {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &r in &rows {
                let v = self.x.row(r)[f];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo >= hi {
                continue; // constant in this node
            }
            let threshold = lo + self.rng.random::<f64>() * (hi - lo);
            let mut left_counts = vec![0u32; self.n_classes];
            let mut n_left = 0u32;
            for &r in &rows {
                if self.x.row(r)[f] < threshold {
                    left_counts[self.x.labels()[r]] += 1;
                    n_left += 1;
                }
            }
            let n_right = n - n_left;
            if n_left == 0 || n_right == 0 {
                continue; // degenerate cut (can only happen at the range edge)
            }
            let right_counts: Vec<u32> =
                counts.iter().zip(&left_counts).map(|(&c, &l)| c - l).collect();
            let decrease = parent_gini
                - (f64::from(n_left) / f64::from(n)) * gini(&left_counts, n_left)
                - (f64::from(n_right) / f64::from(n)) * gini(&right_counts, n_right);
            if best.is_none_or(|(b, _, _)| decrease > b) {
                best = Some((decrease, f, threshold));
            }
        }

        match best {
            None => {
                self.nodes.push(SplitNode::Leaf { counts });
                self.nodes.len() - 1
            }
            Some((_, feature, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| self.x.row(r)[feature] < threshold);
                let idx = self.nodes.len();
                self.nodes.push(SplitNode::Leaf { counts: Vec::new() }); // placeholder
                let left = self.build(left_rows);
                let right = self.build(right_rows);
                self.nodes[idx] = SplitNode::Split { feature, threshold, left, right };
                idx
            }
        }
    }
}

/// Fits an extremely randomized trees classifier. `n_classes` is passed
/// explicitly so fold-trained models keep consistent probability dimensions
/// even when a class is absent from the fold.
pub fn fit_extra_trees(
    x: &FeatureMatrix,
    n_classes: usize,
    n_trees: usize,
    seed: u64,
) -> Result<ExtraTreesModel> {
    if x.n_rows() < 2 || x.n_cols() == 0 {
        return Err(Error::DegenerateInput(format!(
            "{} rows x {} features",
            x.n_rows(),
            x.n_cols()
        )));
    }
    let distinct: std::collections::HashSet<usize> = x.labels().iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateInput("single class in training labels".into()));
    }
    if n_trees == 0 {
        return Err(Error::InvalidConfig("tree count must be positive".into()));
    }
    let k_features = (x.n_cols().isqrt()).max(1);
    let trees = (0..n_trees)
        .map(|i| {
            let mut builder = TreeBuilder {
                x,
                n_classes,
                k_features,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64)),
                nodes: Vec::new(),
            };
            let root = builder.build((0..x.n_rows()).collect());
            debug_assert_eq!(root, 0);
            DecisionTree { nodes: builder.nodes }
        })
        .collect();
    Ok(ExtraTreesModel {
        format_version: 1,
        n_classes,
        n_features: x.n_cols(),
        seed,
        trees,
    })
}

impl ExtraTreesModel {
    /// Per-class probabilities: the average of the per-tree leaf class
    /// distributions. Every row sums to 1.
    pub fn predict_proba_row(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.n_classes];
        for tree in &self.trees {
            let counts = tree.leaf_for(row);
            let total: u32 = counts.iter().sum();
            if total > 0 {
                for (a, &c) in acc.iter_mut().zip(counts) {
                    *a += f64::from(c) / f64::from(total);
                }
            }
        }
        let n = self.trees.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        acc
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<Vec<f64>> {
        (0..x.n_rows()).map(|i| self.predict_proba_row(x.row(i))).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        argmax_lowest(&self.predict_proba_row(row))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<usize> {
        (0..x.n_rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Index of the maximum, ties to the lowest index.
fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// 1-nearest-neighbor with Euclidean distance; distance ties break to the
/// lowest training index.
pub fn fit_predict_1nn(train: &FeatureMatrix, test: &FeatureMatrix) -> Vec<usize> {
    assert_eq!(train.n_cols(), test.n_cols());
    (0..test.n_rows())
        .map(|i| {
            let row = test.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for j in 0..train.n_rows() {
                let d: f64 = train
                    .row(j)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            train.labels()[best]
        })
        .collect()
}

/// Fraction of agreeing positions.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_separable_case() {
        let x = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let m = fit_extra_trees(&x, 2, 10, 3).unwrap();
        assert_eq!(m.predict(&x), vec![0, 1]);
        assert_eq!(accuracy(&m.predict(&x), x.labels()), 1.0);
    }

    #[test]
    fn constant_features_yield_majority_leaves() {
        let x = FeatureMatrix::from_rows(
            vec![vec![2.0, 2.0]; 4],
            vec![0, 0, 0, 1],
        );
        let m = fit_extra_trees(&x, 2, 10, 7).unwrap();
        for tree in &m.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert_eq!(tree.nodes[0], SplitNode::Leaf { counts: vec![3, 1] });
        }
        let proba = m.predict_proba_row(&[2.0, 2.0]);
        assert_eq!(proba, vec![0.75, 0.25]);
        assert_eq!(m.predict_row(&[2.0, 2.0]), 0);
    }

    #[test]
    fn majority_tie_breaks_to_lowest_class() {
        let x = FeatureMatrix::from_rows(vec![vec![1.0]; 4], vec![1, 0, 1, 0]);
        let m = fit_extra_trees(&x, 2, 5, 1).unwrap();
        assert_eq!(m.predict_row(&[1.0]), 0);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let x = FeatureMatrix::from_rows(vec![vec![1.0], vec![2.0]], vec![0, 0]);
        assert!(matches!(fit_extra_trees(&x, 1, 10, 0), Err(Error::DegenerateInput(_))));
        let empty = FeatureMatrix::new(Vec::new(), 0, 0, Vec::new());
        assert!(matches!(fit_extra_trees(&empty, 2, 10, 0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn fit_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i * 3 % 11) as f64])
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| (i % 3 == 0) as usize).collect();
        let x = FeatureMatrix::from_rows(rows, labels);
        let a = fit_extra_trees(&x, 2, 10, 42).unwrap();
        let b = fit_extra_trees(&x, 2, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = fit_extra_trees(&x, 2, 10, 43).unwrap();
        assert_eq!(a.predict(&x).len(), c.predict(&x).len());
    }

    #[test]
    fn duplicating_training_rows_keeps_predictions() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 13) as f64]).collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let x = FeatureMatrix::from_rows(rows.clone(), labels.clone());
        let mut dup_rows = Vec::new();
        let mut dup_labels = Vec::new();
        for (r, &l) in rows.iter().zip(&labels) {
            dup_rows.push(r.clone());
            dup_rows.push(r.clone());
            dup_labels.push(l);
            dup_labels.push(l);
        }
        let xd = FeatureMatrix::from_rows(dup_rows, dup_labels);
        // Doubling every row leaves the node-local ranges and class
        // proportions unchanged, so with the same seed the grown partition
        // predicts identically.
        let m1 = fit_extra_trees(&x, 2, 10, 9).unwrap();
        let m2 = fit_extra_trees(&xd, 2, 10, 9).unwrap();
        let probe = FeatureMatrix::from_rows(
            (0..40).map(|i| vec![i as f64 / 2.0, (i % 13) as f64]).collect(),
            vec![0; 40],
        );
        assert_eq!(m1.predict(&probe), m2.predict(&probe));
    }

    proptest! {
        #[test]
        fn probabilities_form_a_simplex(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30usize;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let x = FeatureMatrix::from_rows(rows, labels);
            let m = fit_extra_trees(&x, 3, 10, seed).unwrap();
            for p in m.predict_proba(&x) {
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            // predict agrees with argmax of predict_proba.
            for i in 0..n {
                let proba = m.predict_proba_row(x.row(i));
                prop_assert_eq!(m.predict_row(x.row(i)), argmax_lowest(&proba));
            }
        }
    }

    #[test]
    fn blobs_split_cleanly() {
        use rand::Rng;
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let class = i % 2;
            let center = if class == 0 { 0.0 } else { 6.0 };
            rows.push(vec![
                center + normal.sample(&mut rng),
                center + normal.sample(&mut rng),
            ]);
            labels.push(class);
            let _ = rng.random::<u32>(); // decorrelate successive draws
        }
        let train_idx: Vec<usize> = (0..100).collect();
        let test_idx: Vec<usize> = (100..200).collect();
        let all = FeatureMatrix::from_rows(rows, labels);
        let train = all.select(&train_idx);
        let test = all.select(&test_idx);
        let m = fit_extra_trees(&train, 2, 10, 5).unwrap();
        let acc = accuracy(&m.predict(&test), test.labels());
        assert!(acc >= 0.99, "holdout accuracy {acc}");
    }

    #[test]
    fn one_nn_basics() {
        let train = FeatureMatrix::from_rows(
            vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![9.0, 1.0]],
            vec![0, 1, 2],
        );
        // An exact training point maps to its own label.
        let test = FeatureMatrix::from_rows(vec![vec![5.0, 5.0]], vec![0]);
        assert_eq!(fit_predict_1nn(&train, &test), vec![1]);
        // A single training instance labels everything.
        let single = FeatureMatrix::from_rows(vec![vec![1.0, 1.0]], vec![7]);
        let test = FeatureMatrix::from_rows(vec![vec![0.0, 0.0], vec![9.0, 9.0]], vec![0, 0]);
        assert_eq!(fit_predict_1nn(&single, &test), vec![7, 7]);
    }

    #[test]
    fn one_nn_tie_breaks_to_lowest_index() {
        let train = FeatureMatrix::from_rows(
            vec![vec![1.0], vec![-1.0]],
            vec![5, 3],
        );
        let test = FeatureMatrix::from_rows(vec![vec![0.0]], vec![0]);
        assert_eq!(fit_predict_1nn(&train, &test), vec![5]);
    }

    #[test]
    fn one_nn_matches_brute_force_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let train_rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let train_labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        let test_rows: Vec<Vec<f64>> =
            (0..100).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let train = FeatureMatrix::from_rows(train_rows.clone(), train_labels.clone());
        let test = FeatureMatrix::from_rows(test_rows.clone(), vec![0; 100]);
        let got = fit_predict_1nn(&train, &test);
        for (i, row) in test_rows.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, tr) in train_rows.iter().enumerate() {
                let d: f64 = tr.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assert_eq!(got[i], train_labels[best]);
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(accuracy(&[1, 2, 3], &[0, 0, 0]), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 0, 1, 0]), 0.75);
    }
}
