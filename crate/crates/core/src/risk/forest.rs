use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, check_xy};
use crate::error::{Error, Result};

/// Features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    /// `max(1, floor(sqrt(D)))`.
    Sqrt,
}

impl MaxFeatures {
    fn count(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => ((num_traits::Float::sqrt(d as f64)) as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub seed: u64,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_estimators: 100, seed: 42, max_features: MaxFeatures::Sqrt, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Class fractions of the training samples reaching the leaf.
    Leaf { dist: Vec<f64> },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub classes: usize,
}

impl DecisionTree {
    pub fn leaf_dist(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict_one(&self, row: &[f64]) -> usize {
        argmax(self.leaf_dist(row))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// `n_left * gini_left + n_right * gini_right`.
    pub weighted_impurity: f64,
}

/// Lowest weighted-Gini split of `idx` over `features`, with thresholds at
/// midpoints between consecutive distinct values. Ties keep the earlier
/// feature in `features` and the lower threshold.
pub fn best_split(x: &[Vec<f64>], y: &[usize], k: usize, idx: &[usize], features: &[usize]) -> Option<SplitChoice> {
    let n = idx.len();
    let mut total = vec![0usize; k];
    idx.iter().for_each(|&i| total[y[i]] += 1);
    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = vec![0usize; k];
        for pos in 0..n - 1 {
            left[y[order[pos]]] += 1;
            let (v, next) = (x[order[pos]][f], x[order[pos + 1]][f]);
            if v == next {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let (nl, nr) = (pos + 1, n - pos - 1);
            let imp = nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr);
            if best.map_or(true, |b| imp < b.weighted_impurity - 1e-12) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(SplitChoice { feature: f, threshold, weighted_impurity: imp });
            }
        }
    }
    best
}

/// Grows one CART tree on `idx` (repeats allowed) until leaves are pure or
/// unsplittable.
pub fn fit_tree<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    idx: &[usize],
    max_features: MaxFeatures,
    rng: &mut R,
) -> DecisionTree {
    let d = x[0].len();
    let m = max_features.count(d);
    let mut nodes = vec![Node::Leaf { dist: Vec::new() }];
    let mut stack = vec![(0usize, idx.to_vec())];
    while let Some((slot, members)) = stack.pop() {
        let mut counts = vec![0usize; k];
        members.iter().for_each(|&i| counts[y[i]] += 1);
        let dist: Vec<f64> = counts.iter().map(|&c| c as f64 / members.len() as f64).collect();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure {
            None
        } else {
            let mut feats: Vec<usize> = (0..d).collect();
            feats.shuffle(rng);
            best_split(x, y, k, &members, &feats[..m]).or_else(|| best_split(x, y, k, &members, &feats[m..]))
        };
        match split {
            None => nodes[slot] = Node::Leaf { dist },
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| x[i][s.feature] <= s.threshold);
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { dist: Vec::new() });
                nodes.push(Node::Leaf { dist: Vec::new() });
                nodes[slot] = Node::Split { feature: s.feature, threshold: s.threshold, left: li, right: ri };
                stack.push((ri, r));
                stack.push((li, l));
            }
        }
    }
    DecisionTree { nodes, classes: k }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub classes: usize,
    pub features: usize,
    pub config: ForestConfig,
}

/// Tree `t` of the forest; depends only on `(x, y, cfg, t)`, so trees can be
/// fitted in any order or in parallel.
pub fn fit_forest_tree(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &ForestConfig, t: usize) -> Result<DecisionTree> {
    check_xy(x, y, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(t as u64);
    let n = x.len();
    let idx: Vec<usize> = if cfg.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
    Ok(fit_tree(x, y, k, &idx, cfg.max_features, &mut rng))
}

pub fn fit_forest(x: &[Vec<f64>], y: &[usize], k: usize, cfg: &ForestConfig) -> Result<ForestModel> {
    let d = check_xy(x, y, k)?;
    if cfg.n_estimators == 0 {
        return Err(Error::InvalidConfig("n_estimators must be >= 1".into()));
    }
    let trees = (0..cfg.n_estimators).map(|t| fit_forest_tree(x, y, k, cfg, t)).collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, classes: k, features: d, config: *cfg })
}

impl ForestModel {
    /// Majority vote of per-tree predictions; ties go to the lower class.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        if self.trees.is_empty() {
            return Err(Error::UnfittedModel);
        }
        check_rows(x, self.features)?;
        Ok(x
            .iter()
            .map(|row| {
                let mut votes = vec![0.0; self.classes];
                self.trees.iter().for_each(|t| votes[t.predict_one(row)] += 1.0);
                argmax(&votes)
            })
            .collect())
    }
}
