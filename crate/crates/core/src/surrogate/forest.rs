//! CART regression trees on bootstrap resamples.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::stats::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub bootstrap_ratio: f64,
    /// Fraction of features considered at each split.
    pub max_features: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 20,
            min_samples_leaf: 2,
            bootstrap_ratio: 1.0,
            max_features: 5.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub split: Option<Split>,
    /// Mean training target in this node.
    pub value: f64,
    /// Number of training samples reaching this node.
    pub cover: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(s) = node.split {
            node = if x[s.feature] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
        }
        node.value
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i].split {
                None => 0,
                Some(s) => 1 + walk(nodes, s.left).max(walk(nodes, s.right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

impl Forest {
    /// Fits a forest on rows `x` (all the same width) and targets `y`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty());
        let n_features = x[0].len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, t as u64));
                let m = ((x.len() as f64 * params.bootstrap_ratio).round() as usize).max(1);
                let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..x.len())).collect();
                build_tree(x, y, rows, params, &mut rng)
            })
            .collect();
        Self { trees, n_features }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Per-tree outputs at `x`.
    pub fn tree_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Mean and population variance across trees.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let outs = self.tree_outputs(x);
        if outs.iter().all(|&o| o == outs[0]) {
            return (outs[0], 0.0);
        }
        let n = outs.len() as f64;
        let mean = outs.iter().sum::<f64>() / n;
        let var = outs.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / n;
        (mean, var.max(0.0))
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    nodes: Vec<Node>,
    n_try: usize,
}

fn build_tree(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, params: &ForestParams, rng: &mut ChaCha8Rng) -> Tree {
    let n_features = x[0].len();
    let n_try = ((n_features as f64 * params.max_features).ceil() as usize).clamp(1, n_features.max(1));
    let mut b = Builder {
        x,
        y,
        params,
        nodes: Vec::new(),
        n_try,
    };
    b.grow(rows, 0, rng);
    Tree { nodes: b.nodes }
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = rows.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n as f64;
        let id = self.nodes.len();
        self.nodes.push(Node {
            split: None,
            value: mean,
            cover: n as f64,
        });
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf {
            return id;
        }
        if rows.iter().all(|&r| self.y[r] == self.y[rows[0]]) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x[r][feature] <= threshold);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[id].split = Some(Split {
            feature,
            threshold,
            left,
            right,
        });
        id
    }

    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let n_features = self.x[0].len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut features: Vec<usize> = sample(rng, n_features, self.n_try).into_vec();
        features.sort_unstable();
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &f in &features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            if order[0].0 == order[n - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += order[i].1;
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf || order[i].0 == order[i + 1].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                // maximizing this is equivalent to minimizing the children's SSE
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if best.is_none_or(|b| gain > b.0 + 1e-12 * gain.abs()) {
                    best = Some((gain, f, 0.5 * (order[i].0 + order[i + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
