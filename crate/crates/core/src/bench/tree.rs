//! Binary decision tree grown by Gini impurity decrease.

use super::{Classifier, Matrix, Model};

const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionTree {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for DecisionTree {
    fn default() -> Self {
        DecisionTree { max_depth: 32, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        counts: Vec<usize>,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub root: TreeNode,
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Best split of `rows` over `features`: `(feature, threshold, gain)`.
/// Equal gains keep the lowest feature index, then the lowest threshold.
pub fn best_split(data: &Matrix, rows: &[usize], features: &[usize], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let k = data.classes.len();
    let mut total = vec![0; k];
    for &r in rows {
        total[data.y[r]] += 1;
    }
    let parent = gini(&total);
    let n = rows.len() as f64;
    let mut order: Vec<usize> = features.to_vec();
    order.sort_unstable();
    let mut best: Option<(usize, f64, f64)> = None;
    for j in order {
        let mut sorted: Vec<(f64, usize)> = rows.iter().map(|&r| (data.value(r, j), data.y[r])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0; k];
        for i in 0..sorted.len().saturating_sub(1) {
            left[sorted[i].1] += 1;
            let (a, b) = (sorted[i].0, sorted[i + 1].0);
            let nl = i + 1;
            if a == b || nl < min_leaf || sorted.len() - nl < min_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let gain = parent - (nl as f64 / n) * gini(&left) - ((sorted.len() - nl) as f64 / n) * gini(&right);
            if best.is_none_or(|(_, _, g)| gain > g + GAIN_TOLERANCE) {
                let mid = a + (b - a) / 2.0;
                best = Some((j, if mid < b { mid } else { a }, gain));
            }
        }
    }
    best.filter(|(_, _, g)| *g > GAIN_TOLERANCE)
}

impl DecisionTree {
    pub fn grow(&self, data: &Matrix, rows: &[usize], features: &[usize]) -> TreeModel {
        TreeModel { root: self.node(data, rows, features, 0) }
    }

    fn node(&self, data: &Matrix, rows: &[usize], features: &[usize], depth: usize) -> TreeNode {
        let mut counts = vec![0; data.classes.len()];
        for &r in rows {
            counts[data.y[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth || rows.len() < 2 * self.min_leaf.max(1) {
            return TreeNode::Leaf { counts };
        }
        let Some((feature, threshold, _)) = best_split(data, rows, features, self.min_leaf) else {
            return TreeNode::Leaf { counts };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.value(i, feature) <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.node(data, &l, features, depth + 1)),
            right: Box::new(self.node(data, &r, features, depth + 1)),
        }
    }
}

impl Model for TreeModel {
    /// Class frequencies of the reached leaf.
    fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut n = &self.root;
        loop {
            match n {
                TreeNode::Leaf { counts } => {
                    let total = counts.iter().sum::<usize>().max(1) as f64;
                    return counts.iter().map(|&c| c as f64 / total).collect();
                }
                TreeNode::Split { feature, threshold, left, right } => {
                    n = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

impl Classifier for DecisionTree {
    fn name(&self) -> &str {
        "tree"
    }

    fn fit(&self, data: &Matrix, rows: &[usize], features: &[usize]) -> Box<dyn Model> {
        Box::new(self.grow(data, rows, features))
    }
}
