//! Bagged CART regression trees.
//!
//! Each tree is grown on a bootstrap resample (n draws with replacement)
//! with per-node uniform feature subsampling. Splits minimize the summed
//! child squared error (variance reduction); candidate thresholds are
//! midpoints between consecutive distinct feature values, and ties resolve
//! by (score, feature index, threshold), so tree growth is deterministic
//! given the per-tree random stream. An impure node splits even when no
//! candidate improves the objective (recursion still purifies it), which
//! gives exact training interpolation for unique rows at full depth.
//!
//! All randomness derives from `ForestParams::seed`; every tree seeds its
//! own substream, so parallel construction is schedule-independent.

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FitDiagnostics, ModelState};
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees to purity.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: usize,
    /// Bootstrap resampling of the training rows (n with replacement).
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
    pub seed: u64,
}

fn default_bootstrap() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    params: &'a ForestParams,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: &mut Vec<usize>, depth: usize) -> usize {
        let m = indices.len();
        let mean = indices.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;

        let at_max_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small = m < 2 * self.params.min_samples_leaf || m < 2;
        let pure = {
            let first = self.y[indices[0]];
            indices.iter().all(|&i| self.y[i] == first)
        };
        if at_max_depth || too_small || pure {
            return self.push_leaf(mean);
        }

        let Some(split) = self.find_split(indices) else {
            return self.push_leaf(mean);
        };

        // stable partition keeps per-child ordering deterministic
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x.get(i, split.feature) <= split.threshold);
        debug_assert!(!left.is_empty() && !right.is_empty());

        let node_idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean }); // placeholder
        let left_idx = self.build(&mut left, depth + 1);
        let right_idx = self.build(&mut right, depth + 1);
        self.nodes[node_idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_idx,
            right: right_idx,
        };
        node_idx
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn find_split(&mut self, indices: &[usize]) -> Option<BestSplit> {
        let d = self.x.n_cols();
        let n_sample = self.params.max_features.min(d);
        let mut features = index_sample(&mut self.rng, d, n_sample).into_vec();
        features.sort_unstable();

        let m = indices.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<BestSplit> = None;
        let mut column: Vec<(f64, f64)> = Vec::with_capacity(m);

        for &f in &features {
            column.clear();
            column.extend(indices.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            column.sort_unstable_by(|a, b| {
                a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal)
            });

            let total_sum: f64 = column.iter().map(|&(_, t)| t).sum();
            let total_sq: f64 = column.iter().map(|&(_, t)| t * t).sum();
            let mut left_sum = 0.0f64;
            let mut left_sq = 0.0f64;
            for p in 1..m {
                let (v_prev, t_prev) = column[p - 1];
                left_sum += t_prev;
                left_sq += t_prev * t_prev;
                let v = column[p].0;
                if v <= v_prev {
                    continue; // only between distinct values
                }
                if p < min_leaf || m - p < min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let sse_left = (left_sq - left_sum * left_sum / p as f64).max(0.0);
                let sse_right =
                    (right_sq - right_sum * right_sum / (m - p) as f64).max(0.0);
                let score = sse_left + sse_right;
                let threshold = 0.5 * (v_prev + v);
                let better = match &best {
                    None => true,
                    Some(b) => {
                        score < b.score
                            || (score == b.score
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(BestSplit { score, feature: f, threshold });
                }
            }
        }
        best
    }
}

fn fit_tree(params: &ForestParams, x: &FeatureMatrix, y: &[f64], tree_index: u64) -> Tree {
    let mut rng = seeding::rng(params.seed, &[tree_index]);
    let n = x.n_rows();
    let mut indices: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut builder = TreeBuilder { x, y, params, rng, nodes: Vec::new() };
    builder.build(&mut indices, 0);
    Tree { nodes: builder.nodes }
}

pub(super) fn fit(
    params: &ForestParams,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<(ModelState, FitDiagnostics)> {
    if params.n_trees == 0 {
        return Err(Error::Config("forest: n_trees must be at least 1".to_string()));
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::Config(
            "forest: min_samples_leaf must be at least 1".to_string(),
        ));
    }
    if params.max_features == 0 || params.max_features > x.n_cols() {
        return Err(Error::Config(format!(
            "forest: max_features = {} outside [1, {}]",
            params.max_features,
            x.n_cols()
        )));
    }
    let trees: Vec<Tree> = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| fit_tree(params, x, y, t))
        .collect();
    Ok((ModelState::Forest { trees }, FitDiagnostics::default()))
}

pub(super) fn predict(trees: &[Tree], x: &FeatureMatrix) -> Result<Vec<f64>> {
    let n_trees = trees.len() as f64;
    Ok((0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n_trees
        })
        .collect())
}
