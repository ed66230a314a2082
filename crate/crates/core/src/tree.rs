//! CART-style regression tree: SSE-reduction splitting, complexity-parameter
//! pruning relative to the root SSE, and grid-search cross-validation over
//! (minsplit, maxdepth, cp).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ccc, kfold_split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHyperparams {
    /// Minimum node size to attempt a split.
    pub minsplit: usize,
    /// Maximum number of splits along any root-to-leaf path.
    pub maxdepth: usize,
    /// Minimum SSE improvement, as a fraction of the root SSE, to keep a split.
    pub cp: f64,
}

impl TreeHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.minsplit < 2 {
            return Err(Error::InvalidInput("minsplit must be >= 2".into()));
        }
        if self.maxdepth < 1 {
            return Err(Error::InvalidInput("maxdepth must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cp) {
            return Err(Error::InvalidInput("cp must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// The grid shipped as a default; the paper does not report its grid values.
pub fn default_grid() -> Vec<TreeHyperparams> {
    let mut grid = Vec::new();
    for &minsplit in &[2usize, 5, 10, 20] {
        for &maxdepth in &[2usize, 3, 4, 6] {
            for &cp in &[0.001, 0.01, 0.05] {
                grid.push(TreeHyperparams {
                    minsplit,
                    maxdepth,
                    cp,
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node")]
pub enum TreeNode {
    Leaf {
        prediction: f64,
        n: usize,
    },
    Internal {
        feature: usize,
        feature_name: String,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: TreeNode,
    pub feature_names: Vec<String>,
    pub hyperparams: TreeHyperparams,
}

fn sse(targets: &[f64], indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64;
    indices
        .iter()
        .map(|&i| {
            let d = targets[i] - mean;
            d * d
        })
        .sum()
}

/// Best threshold for one column: the midpoint between adjacent distinct
/// sorted values that maximizes SSE(parent) - SSE(left) - SSE(right). Ties go
/// to the smallest threshold; a constant column yields `None`.
pub fn best_split(column: &[f64], targets: &[f64]) -> Option<(f64, f64)> {
    assert_eq!(column.len(), targets.len());
    let n = column.len();
    if n < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].partial_cmp(&column[b]).unwrap());

    let total_sum: f64 = targets.iter().sum();
    let total_sq: f64 = targets.iter().map(|y| y * y).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;

    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for (pos, &idx) in order.iter().enumerate().take(n - 1) {
        left_sum += targets[idx];
        left_sq += targets[idx] * targets[idx];
        let here = column[idx];
        let next = column[order[pos + 1]];
        if here == next {
            continue;
        }
        let left_n = (pos + 1) as f64;
        let right_n = (n - pos - 1) as f64;
        let right_sum = total_sum - left_sum;
        let right_sq = total_sq - left_sq;
        let left_sse = left_sq - left_sum * left_sum / left_n;
        let right_sse = right_sq - right_sum * right_sum / right_n;
        let reduction = parent_sse - left_sse - right_sse;
        let threshold = (here + next) / 2.0;
        match best {
            Some((_, r)) if r >= reduction => {}
            _ => best = Some((threshold, reduction)),
        }
    }
    best
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    params: TreeHyperparams,
    root_sse: f64,
    feature_names: &'a [String],
}

impl Builder<'_> {
    fn build(&self, indices: &[usize], depth: usize) -> TreeNode {
        let prediction = indices.iter().map(|&i| self.targets[i]).sum::<f64>() / indices.len() as f64;
        let leaf = TreeNode::Leaf {
            prediction,
            n: indices.len(),
        };
        if indices.len() < self.params.minsplit
            || depth >= self.params.maxdepth
            || self.root_sse <= 0.0
        {
            return leaf;
        }
        let targets: Vec<f64> = indices.iter().map(|&i| self.targets[i]).collect();
        let n_features = self.rows[0].len();
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in 0..n_features {
            let column: Vec<f64> = indices.iter().map(|&i| self.rows[i][feature]).collect();
            if let Some((threshold, reduction)) = best_split(&column, &targets) {
                match best {
                    Some((_, _, r)) if r >= reduction => {}
                    _ => best = Some((feature, threshold, reduction)),
                }
            }
        }
        let Some((feature, threshold, reduction)) = best else {
            return leaf;
        };
        if reduction / self.root_sse < self.params.cp {
            return leaf;
        }
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][feature] <= threshold);
        if left_idx.is_empty() || right_idx.is_empty() {
            return leaf;
        }
        TreeNode::Internal {
            feature,
            feature_name: self.feature_names[feature].clone(),
            threshold,
            left: Box::new(self.build(&left_idx, depth + 1)),
            right: Box::new(self.build(&right_idx, depth + 1)),
        }
    }
}

pub fn fit(
    rows: &[Vec<f64>],
    targets: &[f64],
    feature_names: &[String],
    params: TreeHyperparams,
) -> Result<TreeModel> {
    params.validate()?;
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::InvalidInput(
            "tree training needs matching nonempty rows and targets".into(),
        ));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) || feature_names.len() != n_features {
        return Err(Error::InvalidInput("inconsistent feature dimensions".into()));
    }
    let indices: Vec<usize> = (0..rows.len()).collect();
    let root_sse = sse(targets, &indices);
    let builder = Builder {
        rows,
        targets,
        params,
        root_sse,
        feature_names,
    };
    Ok(TreeModel {
        root: builder.build(&indices, 0),
        feature_names: feature_names.to_vec(),
        hyperparams: params,
    })
}

pub fn predict(model: &TreeModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.feature_names.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} features, got {}",
            model.feature_names.len(),
            x.len()
        )));
    }
    let mut node = &model.root;
    loop {
        match node {
            TreeNode::Leaf { prediction, .. } => return Ok(*prediction),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                node = if x[*feature] <= *threshold { left } else { right };
            }
        }
    }
}

/// Grid search scored by pooled out-of-fold CCC; ties keep the earlier grid
/// point.
pub fn grid_search_cv(
    rows: &[Vec<f64>],
    targets: &[f64],
    feature_names: &[String],
    grid: &[TreeHyperparams],
    k: usize,
    seed: u64,
) -> Result<(TreeHyperparams, f64)> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    let ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
    let folds = kfold_split(&ids, k, seed)?;
    let mut best: Option<(TreeHyperparams, f64)> = None;
    for &params in grid {
        let mut predictions = vec![0.0; rows.len()];
        for fold in 0..k {
            let train_idx: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] != fold).collect();
            let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
            let train_targets: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
            let model = fit(&train_rows, &train_targets, feature_names, params)?;
            for i in (0..rows.len()).filter(|&i| folds[i] == fold) {
                predictions[i] = predict(&model, &rows[i])?;
            }
        }
        let score = ccc(targets, &predictions)?;
        match best {
            Some((_, s)) if s >= score => {}
            _ => best = Some((params, score)),
        }
    }
    Ok(best.unwrap())
}
