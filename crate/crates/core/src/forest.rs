//! CART random forest: Gini impurity, midpoint thresholds, a bootstrap sample
//! per tree, and a random feature subset per node. Trees vote with the argmax
//! of their leaf distribution; the forest returns the majority vote with ties
//! going to the lowest class index.
//!
//! Each tree draws from its own RNG seeded by `seed::derive(seed, tree_index)`,
//! so training in parallel yields the same model as training serially.

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; `None` means `ceil(sqrt(n_features))`.
    pub feature_subsample: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: None,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidConfig(
                "n_trees, max_depth and min_leaf must all be positive".into(),
            ));
        }
        if self.feature_subsample == Some(0) {
            return Err(Error::InvalidConfig("feature_subsample must be positive".into()));
        }
        Ok(())
    }

    fn features_per_node(&self, n_features: usize) -> usize {
        self.feature_subsample
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

/// Labeled rows. All rows share one length; labels are `< n_classes`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(n_classes: usize) -> Self {
        Dataset {
            rows: Vec::new(),
            labels: Vec::new(),
            n_classes,
        }
    }

    pub fn push(&mut self, row: Vec<f64>, label: usize) {
        self.rows.push(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    fn check(&self) -> Result<()> {
        let d = self.n_features();
        if self.rows.len() != self.labels.len() {
            return Err(Error::InsufficientData("row and label counts differ".into()));
        }
        if let Some((i, _)) = self.rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InsufficientData(format!("row {i} has a different length")));
        }
        if let Some(i) = self.rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InsufficientData(format!("row {i} has a non-finite feature")));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::InsufficientData(format!("label {l} out of range")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        dist: Vec<f64>,
    },
}

/// Flat binary tree; node 0 is the root. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn leaf_distribution(&self, row: &[f64]) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { dist } => return dist,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(self.leaf_distribution(row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Lowest index among the maxima.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub params: ForestParams,
    pub seed: u64,
    /// Set when training saw a single class; the model then always predicts it.
    pub degenerate: bool,
    pub constant: Option<usize>,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub fn votes(&self, row: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        if let Some(c) = self.constant {
            votes[c] = self.trees.len().max(1);
            return votes;
        }
        for tree in &self.trees {
            votes[tree.predict(row)] += 1;
        }
        votes
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        if let Some(c) = self.constant {
            return c;
        }
        let votes = self.votes(row);
        let mut best = 0;
        for (i, v) in votes.iter().enumerate() {
            if *v > votes[best] {
                best = i;
            }
        }
        best
    }

    /// Mean of the leaf distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        if let Some(c) = self.constant {
            p[c] = 1.0;
            return p;
        }
        for tree in &self.trees {
            for (acc, v) in p.iter_mut().zip(tree.leaf_distribution(row)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .rows
            .iter()
            .zip(&data.labels)
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Trains a forest. A dataset with a single class yields a constant model
/// flagged `degenerate`.
pub fn train_forest(data: &Dataset, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    data.check()?;
    if data.len() < 2 * params.min_leaf || data.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {}",
            data.len(),
            (2 * params.min_leaf).max(1)
        )));
    }
    let counts = data.class_counts();
    let present: Vec<usize> = (0..data.n_classes).filter(|&c| counts[c] > 0).collect();
    let mut model = ForestModel {
        n_features: data.n_features(),
        n_classes: data.n_classes,
        params: params.clone(),
        seed,
        degenerate: false,
        constant: None,
        trees: Vec::new(),
    };
    if present.len() == 1 {
        model.degenerate = true;
        model.constant = Some(present[0]);
        return Ok(model);
    }
    model.trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, t as u64));
            let sample: Vec<usize> = (0..data.len()).map(|_| rng.gen_range(0..data.len())).collect();
            TreeBuilder {
                data,
                params,
                k: params.features_per_node(data.n_features()),
                rng,
                nodes: Vec::new(),
            }
            .build(sample)
        })
        .collect();
    Ok(model)
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    k: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// `n * gini`, computed as `n - sum(c^2) / n`.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

impl TreeBuilder<'_> {
    fn build(mut self, sample: Vec<usize>) -> DecisionTree {
        self.grow(sample, 0);
        DecisionTree { nodes: self.nodes }
    }

    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.data.n_classes];
        for &i in idx {
            counts[self.data.labels[i]] += 1;
        }
        counts
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> u32 {
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { dist: Vec::new() });
        let counts = self.counts(&idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf {
            None
        } else {
            self.find_split(&idx, &counts)
        };
        match split {
            None => {
                let n = idx.len() as f64;
                self.nodes[at] = TreeNode::Leaf {
                    dist: counts.iter().map(|&c| c as f64 / n).collect(),
                };
            }
            Some(best) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| self.data.rows[i][best.feature] <= best.threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = TreeNode::Split {
                    feature: best.feature as u32,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        at as u32
    }

    /// Best impurity-reducing split over a random feature subset. If the
    /// subset has none, the remaining features are tried in random order.
    fn find_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<Best> {
        let d = self.data.n_features();
        let parent = weighted_gini(counts, idx.len());
        let mut features: Vec<usize> = index::sample(&mut self.rng, d, self.k).into_vec();
        let mut rest: Vec<usize> = (0..d).filter(|f| !features.contains(f)).collect();
        rest.shuffle(&mut self.rng);
        let mut best: Option<Best> = None;
        features.extend(rest);
        for (tried, f) in features.into_iter().enumerate() {
            if tried >= self.k && best.is_some() {
                break;
            }
            if let Some(cand) = self.best_threshold(idx, f, counts) {
                if cand.score < parent - 1e-12 && best.as_ref().is_none_or(|b| cand.score < b.score) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    fn best_threshold(&self, idx: &[usize], feature: usize, total: &[usize]) -> Option<Best> {
        let rows = &self.data.rows;
        let mut order: Vec<(f64, usize)> = idx.iter().map(|&i| (rows[i][feature], self.data.labels[i])).collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if order[0].0 == order[order.len() - 1].0 {
            return None;
        }
        let n = order.len();
        let min_leaf = self.params.min_leaf;
        let mut left = vec![0usize; total.len()];
        let mut right = total.to_vec();
        let mut best: Option<Best> = None;
        for i in 1..n {
            let label = order[i - 1].1;
            left[label] += 1;
            right[label] -= 1;
            if order[i - 1].0 == order[i].0 || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let score = weighted_gini(&left, i) + weighted_gini(&right, n - i);
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = (order[i - 1].0 + order[i].0) / 2.0;
                // Midpoint can round up to the right value for adjacent floats.
                if threshold >= order[i].0 {
                    threshold = order[i - 1].0;
                }
                best = Some(Best {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }
}

/// Mean accuracy over `folds` shuffled folds.
pub fn cross_validate(data: &Dataset, params: &ForestParams, folds: usize, seed: u64) -> Result<f64> {
    if folds < 2 || data.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{}-fold cross-validation on {} samples",
            folds,
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut total = 0.0;
    for f in 0..folds {
        let mut train = Vec::with_capacity(order.len());
        let mut test = Vec::with_capacity(order.len() / folds + 1);
        for (pos, &i) in order.iter().enumerate() {
            if pos % folds == f {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        let model = train_forest(&data.subset(&train), params, seed::derive(seed, f as u64))?;
        total += model.accuracy(&data.subset(&test));
    }
    Ok(total / folds as f64)
}

/// Hyperparameter grid searched by [`select_params`].
pub fn default_grid(base: &ForestParams) -> Vec<ForestParams> {
    let mut grid = Vec::new();
    for max_depth in [8, 12, 16] {
        for n_trees in [25, 50] {
            grid.push(ForestParams {
                max_depth,
                n_trees,
                ..base.clone()
            });
        }
    }
    grid
}

/// Picks the grid entry with the best 5-fold accuracy; earlier entries win ties.
pub fn select_params(data: &Dataset, grid: &[ForestParams], seed: u64) -> Result<(ForestParams, f64)> {
    let mut best: Option<(ForestParams, f64)> = None;
    for params in grid {
        let acc = cross_validate(data, params, 5, seed)?;
        if best.as_ref().is_none_or(|(_, b)| acc > *b) {
            best = Some((params.clone(), acc));
        }
    }
    best.ok_or(Error::Empty("hyperparameter grid"))
}
