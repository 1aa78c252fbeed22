//! Random forest: bootstrapped CART trees with per-split feature sampling.

use ndarray::{ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, FeatureChoice, GrowParams, Tree};
use super::{canonical_row_order, Dataset, FittedModel, ForestParams};
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub feature_codes: Vec<String>,
}

impl ForestModel {
    /// Unweighted mean of the member trees.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }
}

/// Fits `n_estimators` trees, each on a bootstrap sample (n draws with
/// replacement) considering `max_features` randomly drawn columns per split.
/// Tree `t` draws from its own stream seeded by (seed, t), so trees are
/// independent of build order and the whole fit is reproducible.
pub fn fit_random_forest(d: &Dataset, params: &ForestParams) -> Result<FittedModel> {
    params.validate()?;
    let m = params.max_features.resolve(d.p())?;
    let n = d.n();

    // Sampling happens over canonical row positions, so permuting the
    // training rows cannot change the fitted forest.
    let order = canonical_row_order(&d.x.view(), &d.y.view());
    let xs = d.x.select(Axis(0), &order);
    let ys = d.y.select(Axis(0), &order);
    let ys = ys.as_slice().expect("standard layout");

    let mut trees = Vec::with_capacity(params.n_estimators);
    let gp = GrowParams::plain(&params.tree);
    for t in 0..params.n_estimators {
        let mut tree_rng = rng::rng_from_seed(rng::mix(params.seed, t as u64));
        let rows: Vec<usize> = (0..n).map(|_| tree_rng.random_range(0..n)).collect();
        let mut fc = FeatureChoice::PerSplit { m, pool: (0..d.p()).collect(), rng: &mut tree_rng };
        trees.push(grow_tree(&xs.view(), ys, rows, &gp, &mut fc));
    }
    Ok(FittedModel::Forest(ForestModel {
        trees,
        params: params.clone(),
        feature_codes: d.codes.clone(),
    }))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::dataset;
    use super::*;
    use crate::models::{fit, predict, LearnerParams, MaxFeatures, TreeParams};
    use ndarray::Array2;
    use rand::Rng as _;

    fn forest_params(n_estimators: usize, seed: u64) -> ForestParams {
        ForestParams {
            tree: TreeParams { max_depth: 4, min_samples_split: 2, min_samples_leaf: 1 },
            n_estimators,
            max_features: MaxFeatures::Fraction(0.5),
            seed,
        }
    }

    fn noisy_linear(n: usize, seed: u64) -> Dataset {
        let mut r = crate::rng::rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = r.random_range(0.0..10.0);
            let b: f64 = r.random_range(0.0..10.0);
            let c: f64 = r.random_range(0.0..10.0);
            y.push(2.0 * a - 0.5 * b + 0.1 * (c - 5.0));
            rows.push(vec![a, b, c]);
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, 3), flat).unwrap();
        Dataset::new(x, ndarray::Array1::from_vec(y), vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let d = noisy_linear(30, 7);
        let m = fit_random_forest(&d, &forest_params(12, 3)).unwrap();
        let forest = match &m {
            FittedModel::Forest(f) => f,
            _ => unreachable!(),
        };
        let row = d.x.row(0);
        let mean: f64 =
            forest.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / forest.trees.len() as f64;
        assert_eq!(m.predict_row(row), mean);
    }

    #[test]
    fn same_seed_is_bit_identical_different_seed_is_not() {
        let d = noisy_linear(40, 11);
        let a = fit_random_forest(&d, &forest_params(20, 5)).unwrap();
        let b = fit_random_forest(&d, &forest_params(20, 5)).unwrap();
        assert_eq!(a, b);
        let c = fit_random_forest(&d, &forest_params(20, 6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn permuted_rows_leave_predictions_unchanged() {
        let d = noisy_linear(25, 13);
        let perm: Vec<usize> = {
            let mut v: Vec<usize> = (0..25).collect();
            v.reverse();
            v.swap(3, 17);
            v
        };
        let d2 = d.subset(&perm);
        let p = forest_params(15, 9);
        let a = fit_random_forest(&d, &p).unwrap();
        let b = fit_random_forest(&d2, &p).unwrap();
        let out_a = predict(&a, d.x.view(), &d.codes).unwrap();
        let out_b = predict(&b, d.x.view(), &d.codes).unwrap();
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn forest_beats_single_tree_on_held_out_noise() {
        let train = noisy_linear(60, 21);
        let test = noisy_linear(40, 22);
        let tp = TreeParams { max_depth: 6, min_samples_split: 2, min_samples_leaf: 1 };

        let single = fit(&train, &LearnerParams::Tree(tp)).unwrap();
        let many = fit_random_forest(&train, &forest_params(100, 1)).unwrap();
        let err = |m: &FittedModel| {
            let out = predict(m, test.x.view(), &test.codes).unwrap();
            crate::metrics::rmse(test.y.as_slice().unwrap(), out.as_slice().unwrap()).unwrap()
        };
        assert!(err(&many) <= err(&single), "forest {} vs tree {}", err(&many), err(&single));
    }
}
