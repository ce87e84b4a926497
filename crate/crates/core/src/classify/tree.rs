//! CART classification trees (Gini impurity) and bagged forests.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    /// Train on a bootstrap resample of the rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(12),
            max_features: None,
            bootstrap: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, params: TreeParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n = x.nrows();
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut b = Builder {
            x,
            y,
            n_classes,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(rows, 0);
        DecisionTree { nodes: b.nodes }
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(label) => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

/// Most frequent label, lowest index on ties.
pub(crate) fn argmax_lowest(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > counts[best] { i } else { best })
}

impl Builder<'_> {
    /// Grows the subtree over `rows`, returning its node index.
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[self.y[r]] += 1;
        }
        let majority = argmax_lowest(&counts);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let at_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(majority));
        if pure || at_limit || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let d = self.x.ncols();
        let features: Vec<usize> = match self.params.max_features {
            Some(k) if k < d => {
                let mut f = sample(&mut self.rng, d, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let n = rows.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0usize; self.n_classes];
        let mut right = vec![0usize; self.n_classes];
        for f in features {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(counts);
            for i in 0..n - 1 {
                let (v, label) = sorted[i];
                left[label] += 1;
                right[label] -= 1;
                let next = sorted[i + 1].0;
                if next <= v {
                    continue;
                }
                let nl = i + 1;
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mid = 0.5 * (v + next);
                    // midpoint can round up to `next` for adjacent floats
                    let threshold = if mid < next { mid } else { v };
                    best = Some((score, f, threshold));
                }
            }
        }
        // zero-gain splits are kept: XOR-like labels need them
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 30,
            max_depth: Some(12),
            seed: 0,
        }
    }
}

impl ForestParams {
    /// Parameters of tree `i` for `d`-dimensional data: bootstrap rows, √d features.
    pub fn tree_params(&self, i: usize, d: usize) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            max_features: Some(((d as f64).sqrt().round() as usize).max(1)),
            bootstrap: true,
            seed: self
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(i as u64 + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, params: ForestParams) -> Self {
        let d = x.ncols();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|i| DecisionTree::fit(x, y, n_classes, params.tree_params(i, d)))
            .collect();
        Self { trees, n_classes }
    }

    /// Plurality of tree votes, lowest label on ties.
    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(row)] += 1;
        }
        argmax_lowest(&votes)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}
