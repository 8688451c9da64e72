//! Squared-loss gradient boosting over depth-limited regression trees.
//!
//! Features are binned once per fit into at most `max_bins` quantile bins; each
//! tree level then costs one histogram pass over the node's samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Cross-validation folds for out-of-fold residuals; `None` uses 10 below
    /// 500 samples and 2 otherwise.
    pub cv_folds: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            cv_folds: None,
            min_samples_leaf: 5,
            max_bins: 64,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::arg("n_trees and max_depth must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::arg("learning_rate must lie in (0, 1]"));
        }
        if matches!(self.cv_folds, Some(k) if k < 2) {
            return Err(Error::arg("cv_folds must be at least 2"));
        }
        if self.min_samples_leaf == 0 || self.max_bins < 2 {
            return Err(Error::arg("min_samples_leaf must be positive and max_bins at least 2"));
        }
        Ok(())
    }

    pub fn folds_for(&self, n: usize) -> usize {
        self.cv_folds.unwrap_or(if n < 500 { 10 } else { 2 })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbtModel {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

struct BinnedFeature {
    /// Bin `b` holds values in `(thresholds[b-1], thresholds[b]]`.
    thresholds: Vec<f64>,
    bins: Vec<u16>,
}

fn bin_feature(values: &[f64], max_bins: usize) -> BinnedFeature {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut thresholds = Vec::new();
    for q in 1..max_bins {
        let idx = q * n / max_bins;
        if idx == 0 || idx >= n {
            continue;
        }
        let (lo, hi) = (sorted[idx - 1], sorted[idx]);
        if lo < hi {
            let t = lo + 0.5 * (hi - lo);
            if thresholds.last().is_none_or(|&last| t > last) {
                thresholds.push(t);
            }
        }
    }
    let bins = values
        .iter()
        .map(|&v| thresholds.partition_point(|&t| t < v) as u16)
        .collect();
    BinnedFeature { thresholds, bins }
}

/// Fits on column-major `x`.
pub fn fit_gbt(x: &[&[f64]], y: &[f64], config: &GbtConfig) -> Result<GbtModel> {
    config.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::Fit("no samples".into()));
    }
    if x.iter().any(|c| c.len() != n) {
        return Err(Error::Fit("design columns and target differ in length".into()));
    }
    let base = y.iter().sum::<f64>() / n as f64;
    let mut model = GbtModel {
        base,
        learning_rate: config.learning_rate,
        trees: Vec::new(),
    };
    if x.is_empty() {
        return Ok(model);
    }
    let features: Vec<BinnedFeature> = x.iter().map(|c| bin_feature(c, config.max_bins)).collect();
    let mut pred = vec![base; n];
    let mut residual = vec![0.0; n];
    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let mut builder = TreeBuilder {
            features: &features,
            residual: &residual,
            config,
            nodes: Vec::new(),
            leaf_of: vec![0.0; n],
        };
        let all: Vec<u32> = (0..n as u32).collect();
        builder.grow(all, 0);
        for i in 0..n {
            pred[i] += config.learning_rate * builder.leaf_of[i];
        }
        model.trees.push(Tree { nodes: builder.nodes });
    }
    Ok(model)
}

struct TreeBuilder<'a> {
    features: &'a [BinnedFeature],
    residual: &'a [f64],
    config: &'a GbtConfig,
    nodes: Vec<TreeNode>,
    leaf_of: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<u32>, depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf(0.0));
        let count = idx.len();
        let total: f64 = idx.iter().map(|&i| self.residual[i as usize]).sum();
        let min_leaf = self.config.min_samples_leaf;

        let split = if depth < self.config.max_depth && count >= 2 * min_leaf {
            self.best_split(&idx, total)
        } else {
            None
        };
        match split {
            Some((feature, bin)) => {
                let bins = &self.features[feature].bins;
                let (left, right): (Vec<u32>, Vec<u32>) =
                    idx.into_iter().partition(|&i| bins[i as usize] as usize <= bin);
                let l = self.grow(left, depth + 1);
                let r = self.grow(right, depth + 1);
                self.nodes[slot] = TreeNode::Split {
                    feature,
                    threshold: self.features[feature].thresholds[bin],
                    left: l,
                    right: r,
                };
            }
            None => {
                let value = total / count as f64;
                for &i in &idx {
                    self.leaf_of[i as usize] = value;
                }
                self.nodes[slot] = TreeNode::Leaf(value);
            }
        }
        slot
    }

    /// Best `(feature, last left bin)` by squared-error reduction.
    fn best_split(&self, idx: &[u32], total: f64) -> Option<(usize, usize)> {
        let count = idx.len() as f64;
        let min_leaf = self.config.min_samples_leaf as f64;
        let parent_score = total * total / count;
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, feat) in self.features.iter().enumerate() {
            let n_bins = feat.thresholds.len() + 1;
            if n_bins < 2 {
                continue;
            }
            let mut sum = vec![0.0; n_bins];
            let mut cnt = vec![0.0; n_bins];
            for &i in idx {
                let b = feat.bins[i as usize] as usize;
                sum[b] += self.residual[i as usize];
                cnt[b] += 1.0;
            }
            let (mut sl, mut nl) = (0.0, 0.0);
            for b in 0..n_bins - 1 {
                sl += sum[b];
                nl += cnt[b];
                let nr = count - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl + sr * sr / nr - parent_score;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        best.map(|(_, f, b)| (f, b))
    }
}
