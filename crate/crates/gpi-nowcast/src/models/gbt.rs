//! Gradient-boosted trees on squared loss: each round fits a shallow CART
//! tree to the current residuals over a per-round column subsample.

use ndarray::{ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeatureChoice, GrowParams, Tree};
use super::{canonical_row_order, Dataset, FittedModel, GbtParams};
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub trees: Vec<Tree>,
    /// Mean of the training target; round 0 starts from here.
    pub base_score: f64,
    pub params: GbtParams,
    pub feature_codes: Vec<String>,
}

impl GbtModel {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let boost: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.params.learning_rate * boost
    }
}

/// Fits the boosted ensemble. Leaf values are L2-shrunk residual sums,
/// `sum / (count + leaf_l2)`; the model output is
/// `base + learning_rate * sum of tree outputs`. Round `r` draws its column
/// subsample from a stream seeded by (seed, r).
pub fn fit_gbt(d: &Dataset, params: &GbtParams) -> Result<FittedModel> {
    params.validate()?;
    let n = d.n();
    let p = d.p();
    let n_cols = ((params.colsample_bytree * p as f64).ceil() as usize).clamp(1, p);

    // Canonical order: the column subsample must not depend on row order.
    let order = canonical_row_order(&d.x.view(), &d.y.view());
    let xs = d.x.select(Axis(0), &order);
    let ys = d.y.select(Axis(0), &order);

    let base_score = ys.sum() / n as f64;
    let mut residuals: Vec<f64> = ys.iter().map(|y| y - base_score).collect();

    let gp = GrowParams {
        max_depth: params.max_depth,
        min_samples_split: 2,
        min_samples_leaf: 1,
        leaf_l2: params.leaf_l2,
    };
    let mut pool: Vec<usize> = (0..p).collect();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for round in 0..params.n_estimators {
        let mut round_rng = rng::rng_from_seed(rng::mix(params.seed, round as u64));
        for i in 0..n_cols {
            let j = round_rng.random_range(i..p);
            pool.swap(i, j);
        }
        pool[..n_cols].sort_unstable();
        let mut fc = FeatureChoice::Fixed(pool[..n_cols].to_vec());

        let tree = grow_tree(&xs.view(), &residuals, (0..n).collect(), &gp, &mut fc);
        for (i, r) in residuals.iter_mut().enumerate() {
            *r -= params.learning_rate * tree.predict_row(xs.row(i));
        }
        trees.push(tree);
    }
    Ok(FittedModel::Gbt(GbtModel {
        trees,
        base_score,
        params: params.clone(),
        feature_codes: d.codes.clone(),
    }))
}
