//! Gradient-boosted regression trees on the log-odds scale, fit to the
//! BCE gradient with Newton leaf values and an exact greedy splitter.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{invalid, Error, Result};
use crate::ndcore::{sigmoid_scalar, Matrix};

const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Recorded with the model; the exact splitter itself draws no randomness.
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(invalid("max_depth and min_samples_leaf must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
                TreeNode::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_features: usize,
    pub initial_log_odds: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape {
                op: "predict_gbdt",
                left: x.shape(),
                right: (x.rows(), self.n_features),
            });
        }
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.initial_log_odds + self.learning_rate * self.trees.iter().map(|t| t.eval(row)).sum::<f64>()
            })
            .collect())
    }

    /// The model after its first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            trees: self.trees[..k.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }
}

pub fn predict_gbdt(model: &GbdtModel, x: &Matrix) -> Result<Vec<f64>> {
    Ok(model.logits(x)?.into_iter().map(sigmoid_scalar).collect())
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn score(&self) -> f64 {
        self.g * self.g / self.h.max(HESSIAN_FLOOR)
    }

    fn leaf(&self) -> f64 {
        -self.g / self.h.max(HESSIAN_FLOOR)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// A threshold in `[lo, hi)`, so `hi` always falls on the right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Level-wise exact greedy growth over presorted feature orders.
fn grow_tree(x: &Matrix, sorted: &[Vec<usize>], grad: &[f64], hess: &[f64], config: &GbdtConfig) -> Tree {
    const NONE: usize = usize::MAX;
    let n = x.rows();
    let mut nodes = Vec::new();
    let mut root = Stats::default();
    for i in 0..n {
        root.add(grad[i], hess[i]);
    }
    nodes.push(TreeNode::Leaf { value: root.leaf() });
    // Frontier: (node index, stats); `slot[i]` is the frontier position of record i.
    let mut frontier = vec![(0usize, root)];
    let mut slot = vec![0usize; n];

    for _ in 0..config.max_depth {
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        let mut left = vec![Stats::default(); frontier.len()];
        let mut last = vec![f64::NAN; frontier.len()];
        for (j, order) in sorted.iter().enumerate() {
            left.iter_mut().for_each(|s| *s = Stats::default());
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &i in order {
                let a = slot[i];
                if a == NONE {
                    continue;
                }
                let v = x.get(i, j);
                let l = left[a];
                let total = frontier[a].1;
                if l.n >= config.min_samples_leaf && total.n - l.n >= config.min_samples_leaf && v > last[a] {
                    let r = Stats {
                        g: total.g - l.g,
                        h: total.h - l.h,
                        n: total.n - l.n,
                    };
                    let gain = l.score() + r.score() - total.score();
                    if gain > 1e-12 && best[a].is_none_or(|b| gain > b.gain) {
                        best[a] = Some(Candidate {
                            gain,
                            feature: j,
                            threshold: midpoint(last[a], v),
                        });
                    }
                }
                left[a].add(grad[i], hess[i]);
                last[a] = v;
            }
        }

        let mut next = Vec::new();
        let mut remap = vec![(NONE, NONE); frontier.len()];
        for (a, cand) in best.iter().enumerate() {
            let Some(c) = cand else { continue };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes[frontier[a].0] = TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: r,
            };
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            remap[a] = (next.len(), next.len() + 1);
            next.push((l, Stats::default()));
            next.push((r, Stats::default()));
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let a = slot[i];
            if a == NONE {
                continue;
            }
            slot[i] = match (best[a], remap[a]) {
                (Some(c), (l, r)) => {
                    let s = if x.get(i, c.feature) <= c.threshold { l } else { r };
                    next[s].1.add(grad[i], hess[i]);
                    s
                }
                _ => NONE,
            };
        }
        for &(node, stats) in &next {
            nodes[node] = TreeNode::Leaf { value: stats.leaf() };
        }
        frontier = next;
    }
    Tree { nodes }
}

/// Boosts `config.n_trees` trees on the BCE gradient.
pub fn train_gbdt(dataset: &Dataset, config: &GbdtConfig) -> Result<GbdtModel> {
    config.validate()?;
    if dataset.has_missing() {
        return Err(invalid("dataset has missing values; preprocess it first"));
    }
    let n = dataset.len();
    let positives = dataset.labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(invalid("GBDT training needs both classes present"));
    }
    let base = positives as f64 / n as f64;
    let x = &dataset.features;
    let sorted: Vec<Vec<usize>> = (0..x.cols())
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)));
            idx
        })
        .collect();
    let mut model = GbdtModel {
        n_features: x.cols(),
        initial_log_odds: (base / (1.0 - base)).ln(),
        learning_rate: config.learning_rate,
        trees: Vec::with_capacity(config.n_trees),
    };
    let mut logits = vec![model.initial_log_odds; n];
    let (mut grad, mut hess) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid_scalar(logits[i]);
            grad[i] = p - dataset.labels[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let tree = grow_tree(x, &sorted, &grad, &hess, config);
        for (i, z) in logits.iter_mut().enumerate() {
            *z += config.learning_rate * tree.eval(x.row(i));
        }
        model.trees.push(tree);
    }
    Ok(model)
}
