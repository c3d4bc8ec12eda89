//! CART trees with Gini impurity and a bootstrap-aggregated forest.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{par, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { positive: bool },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> bool {
        match self {
            Node::Leaf { positive } => *positive,
            Node::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

pub fn gini(positive: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positive as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    /// Size-weighted Gini impurity of the two children.
    pub impurity: f64,
}

/// Lowest-impurity midpoint split over `features`, honouring `min_leaf`.
/// Ties keep the first candidate in feature order, then threshold order.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[bool],
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let n = rows.len();
    let total_pos = rows.iter().filter(|&&r| y[r]).count();
    let mut best: Option<BestSplit> = None;
    let mut sorted = rows.to_vec();
    for &f in features {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            left_pos += usize::from(y[sorted[i]]);
            let (lo, hi) = (x[sorted[i]][f], x[sorted[i + 1]][f]);
            let left_n = i + 1;
            if lo == hi || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let impurity = (left_n as f64 * gini(left_pos, left_n)
                + (n - left_n) as f64 * gini(total_pos - left_pos, n - left_n))
                / n as f64;
            if best.is_none_or(|b| impurity < b.impurity) {
                best = Some(BestSplit { feature: f, threshold: 0.5 * (lo + hi), impurity });
            }
        }
    }
    best
}

/// Grow one tree on `rows` (which may repeat, as in a bootstrap sample).
pub fn grow_tree(x: &[Vec<f64>], y: &[bool], rows: &[usize], params: &TreeParams, rng: &mut impl Rng) -> Node {
    grow(x, y, rows, params, 0, rng)
}

fn grow(x: &[Vec<f64>], y: &[bool], rows: &[usize], params: &TreeParams, depth: usize, rng: &mut impl Rng) -> Node {
    let pos = rows.iter().filter(|&&r| y[r]).count();
    // Ties go to the negative class.
    let leaf = Node::Leaf { positive: 2 * pos > rows.len() };
    if depth >= params.max_depth || pos == 0 || pos == rows.len() || rows.len() < 2 * params.min_leaf {
        return leaf;
    }
    let n_features = x[0].len();
    let k = params.features_per_split.clamp(1, n_features);
    let mut features = sample(rng, n_features, k).into_vec();
    features.sort_unstable();
    let parent = gini(pos, rows.len());
    match best_split(x, y, rows, &features, params.min_leaf) {
        Some(s) if s.impurity < parent - 1e-12 => {
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][s.feature] <= s.threshold);
            Node::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(grow(x, y, &left, params, depth + 1, rng)),
                right: Box::new(grow(x, y, &right, params, depth + 1, rng)),
            }
        }
        _ => leaf,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Node>,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap sample and feature subsets from stream `t` of `seed`.
    pub fn fit(x: &[Vec<f64>], y: &[bool], trees: usize, bootstrap: bool, params: &TreeParams, seed: u64) -> Self {
        let n = x.len();
        let trees = par::map_range(trees, |t| {
            let mut rng = rng::stream(seed, t as u64);
            let rows: Vec<usize> =
                if bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            grow_tree(x, y, &rows, params, &mut rng)
        });
        Self { trees }
    }

    /// Fraction of trees voting positive.
    pub fn vote(&self, x: &[f64]) -> f64 {
        self.trees.iter().filter(|t| t.predict(x)).count() as f64 / self.trees.len() as f64
    }

    /// Majority vote; a tie goes to the negative class.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.vote(x) > 0.5
    }
}
