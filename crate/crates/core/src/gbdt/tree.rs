use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{GbdtError, TrainConfig, MIN_HESSIAN};
use crate::features::FEATURE_COUNT;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` (equivalently `bin <= bin`) go left.
    Split {
        feature: usize,
        bin: u8,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Leaf contribution to the log-odds, already scaled by the learning rate.
    Leaf { value: f64 },
}

/// One regression tree; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub(crate) fn predict_binned(&self, row: &[u8]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= bin { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn check(&self, n_features: usize) -> Result<(), GbdtError> {
        if self.nodes.is_empty() {
            return Err(GbdtError::InvalidModel("tree has no nodes"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(GbdtError::InvalidModel("leaf value must be finite"))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= n_features {
                        return Err(GbdtError::InvalidModel("split feature out of range"));
                    }
                    if !threshold.is_finite() {
                        return Err(GbdtError::InvalidModel("split threshold must be finite"));
                    }
                    // Children after parents rules out cycles.
                    if left <= i
                        || right <= i
                        || left >= self.nodes.len()
                        || right >= self.nodes.len()
                    {
                        return Err(GbdtError::InvalidModel("child index out of order"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Default)]
struct BinStats {
    grad: f64,
    hess: f64,
    count: usize,
}

struct BestSplit {
    feature: usize,
    bin: u8,
    gain: f64,
}

struct Grower<'a> {
    binned: &'a [[u8; FEATURE_COUNT]],
    edges: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a TrainConfig,
    nodes: Vec<Node>,
}

fn score(g: f64, h: f64, l2: f64) -> f64 {
    g * g / (h + l2)
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = (h + self.config.l2_regularization).max(1e-12);
        -g / denom * self.config.learning_rate
    }

    fn best_split(&self, rows: &[u32], g_total: f64, h_total: f64) -> Option<BestSplit> {
        let l2 = self.config.l2_regularization;
        let min_leaf = self.config.min_samples_leaf;
        let parent = score(g_total, h_total, l2);
        let mut best: Option<BestSplit> = None;

        for (feature, edges) in self.edges.iter().enumerate() {
            let n_bins = edges.len() + 1;
            if n_bins < 2 {
                continue;
            }
            let mut hist = alloc::vec![BinStats::default(); n_bins];
            for &r in rows {
                let r = r as usize;
                let b = &mut hist[self.binned[r][feature] as usize];
                b.grad += self.grad[r];
                b.hess += self.hess[r];
                b.count += 1;
            }
            let mut left = BinStats::default();
            for (bin, stats) in hist.iter().enumerate().take(n_bins - 1) {
                left.grad += stats.grad;
                left.hess += stats.hess;
                left.count += stats.count;
                let right_count = rows.len() - left.count;
                if left.count < min_leaf || right_count < min_leaf {
                    continue;
                }
                let (gr, hr) = (g_total - left.grad, h_total - left.hess);
                if left.hess < MIN_HESSIAN || hr < MIN_HESSIAN {
                    continue;
                }
                let gain = score(left.grad, left.hess, l2) + score(gr, hr, l2) - parent;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature,
                        bin: bin as u8,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<u32>, depth: usize) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(g, h),
        });
        if depth >= self.config.max_depth || rows.len() < 2 * self.config.min_samples_leaf {
            return idx;
        }
        let Some(split) = self.best_split(&rows, g, h) else {
            return idx;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| self.binned[r as usize][split.feature] <= split.bin);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            bin: split.bin,
            threshold: self.edges[split.feature][split.bin as usize],
            left,
            right,
        };
        idx
    }
}

pub(crate) fn grow(
    binned: &[[u8; FEATURE_COUNT]],
    edges: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
) -> Tree {
    let mut g = Grower {
        binned,
        edges,
        grad,
        hess,
        config,
        nodes: Vec::new(),
    };
    g.grow((0..binned.len() as u32).collect(), 0);
    Tree { nodes: g.nodes }
}
