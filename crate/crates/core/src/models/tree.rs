//! CART with weighted Gini impurity.

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::matrix::Matrix;

/// Gains closer than this are treated as ties.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted class frequencies `[p(0), p(1)]`.
    Leaf { class_freq: [f64; 2], n_samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub nodes: Vec<TreeNode>,
}

impl TreeParams {
    fn leaf_for(&self, row: &[f64]) -> &TreeNode {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| match self.leaf_for(r) {
                TreeNode::Leaf { class_freq, .. } => class_freq[1],
                TreeNode::Split { .. } => unreachable!(),
            })
            .collect()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

fn gini(w0: f64, w1: f64) -> f64 {
    let t = w0 + w1;
    if t <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / t, w1 / t);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best split of rows `idx`, scanning features in ascending order and
/// thresholds (midpoints of sorted unique values) in ascending order.
/// Near-equal gains keep the earlier candidate.
pub(crate) fn best_split(
    x: &Matrix,
    y: &[u8],
    w: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<Candidate> {
    let (mut tw0, mut tw1) = (0.0, 0.0);
    for &i in idx {
        if y[i] == 1 {
            tw1 += w[i];
        } else {
            tw0 += w[i];
        }
    }
    let total = tw0 + tw1;
    let parent = gini(tw0, tw1);
    let mut best: Option<Candidate> = None;
    for f in 0..x.cols() {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        let (mut lw0, mut lw1) = (0.0, 0.0);
        for k in 0..order.len() - 1 {
            let i = order[k];
            if y[i] == 1 {
                lw1 += w[i];
            } else {
                lw0 += w[i];
            }
            let (v, next) = (x.get(i, f), x.get(order[k + 1], f));
            if v == next {
                continue;
            }
            let n_left = k + 1;
            if n_left < min_leaf || order.len() - n_left < min_leaf {
                continue;
            }
            let (rw0, rw1) = (tw0 - lw0, tw1 - lw1);
            let lt = lw0 + lw1;
            let rt = rw0 + rw1;
            let gain = parent - (lt * gini(lw0, lw1) + rt * gini(rw0, rw1)) / total;
            if best.is_none_or(|b| gain > b.gain + GAIN_TIE) {
                best = Some(Candidate {
                    feature: f,
                    threshold: 0.5 * (v + next),
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > GAIN_TIE)
}

pub(crate) fn fit(x: &Matrix, y: &[u8], w: &[f64], cfg: &TrainConfig) -> TreeParams {
    let mut nodes = Vec::new();
    let idx: Vec<usize> = (0..x.rows()).collect();
    grow(x, y, w, &idx, 0, cfg, &mut nodes);
    TreeParams { nodes }
}

fn grow(
    x: &Matrix,
    y: &[u8],
    w: &[f64],
    idx: &[usize],
    depth: usize,
    cfg: &TrainConfig,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let me = nodes.len();
    let (mut w0, mut w1) = (0.0, 0.0);
    for &i in idx {
        if y[i] == 1 {
            w1 += w[i];
        } else {
            w0 += w[i];
        }
    }
    let leaf = TreeNode::Leaf {
        class_freq: [w0 / (w0 + w1), w1 / (w0 + w1)],
        n_samples: idx.len(),
    };
    nodes.push(leaf);
    let pure = w0 == 0.0 || w1 == 0.0;
    if pure || depth >= cfg.max_depth || idx.len() < 2 * cfg.min_samples_leaf {
        return me;
    }
    let Some(split) = best_split(x, y, w, idx, cfg.min_samples_leaf) else {
        return me;
    };
    let (li, ri): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| x.get(i, split.feature) <= split.threshold);
    let left = grow(x, y, w, &li, depth + 1, cfg, nodes);
    let right = grow(x, y, w, &ri, depth + 1, cfg, nodes);
    nodes[me] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig {
            min_samples_leaf: 1,
            ..TrainConfig::default()
        }
    }

    /// Exhaustive Gini gain over every (feature, midpoint) pair.
    fn brute_force_best(x: &Matrix, y: &[u8]) -> (usize, f64, f64) {
        let n = x.rows() as f64;
        let g = |rows: &[usize]| {
            let p = rows.iter().filter(|&&i| y[i] == 1).count() as f64 / rows.len() as f64;
            1.0 - p * p - (1.0 - p) * (1.0 - p)
        };
        let all: Vec<usize> = (0..x.rows()).collect();
        let parent = g(&all);
        let mut best = (0, 0.0, f64::NEG_INFINITY);
        for f in 0..x.cols() {
            let mut vals = x.column(f);
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for t in vals.windows(2).map(|p| 0.5 * (p[0] + p[1])) {
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x.get(i, f) <= t);
                let gain = parent - (l.len() as f64 * g(&l) + r.len() as f64 * g(&r)) / n;
                if gain > best.2 + 1e-12 {
                    best = (f, t, gain);
                }
            }
        }
        best
    }

    #[test]
    fn perfect_feature_gives_depth_one_tree() {
        let x = Matrix::from_rows(&[[0.1, 3.0], [0.2, 1.0], [0.3, 2.0], [0.8, 1.5], [0.9, 2.5], [1.0, 0.5]]).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let t = fit(&x, &y, &[1.0; 6], &cfg());
        assert_eq!(t.depth(), 1);
        let bf = brute_force_best(&x, &y);
        match &t.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(bf.0, 0);
                assert!((threshold - 0.55).abs() < 1e-12);
                assert!((threshold - bf.1).abs() < 1e-12);
            }
            n => panic!("expected a split, got {n:?}"),
        }
        assert_eq!(t.predict_proba(&x), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn leaf_frequency_is_direct_ratio() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]).unwrap();
        let t = fit(&x, &[1, 1, 1, 0], &[1.0; 4], &cfg());
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_proba(&x)[0], 0.75);
    }

    #[test]
    fn equal_gain_ties_go_to_lower_feature() {
        // Both columns separate the labels identically.
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let t = fit(&x, &[0, 0, 1, 1], &[1.0; 4], &cfg());
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn brute_force_agrees_on_random_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rows: Vec<[f64; 3]> = (0..30)
                .map(|_| [rng.random_range(0..5) as f64, rng.random::<f64>(), rng.random_range(0..3) as f64])
                .collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let y: Vec<u8> = (0..30).map(|_| u8::from(rng.random_bool(0.4))).collect();
            if !y.contains(&0) || !y.contains(&1) {
                continue;
            }
            let idx: Vec<usize> = (0..30).collect();
            let fast = best_split(&x, &y, &[1.0; 30], &idx, 1).unwrap();
            let bf = brute_force_best(&x, &y);
            assert!((fast.gain - bf.2).abs() < 1e-12);
            assert_eq!((fast.feature, fast.threshold), (bf.0, bf.1));
        }
    }
}
