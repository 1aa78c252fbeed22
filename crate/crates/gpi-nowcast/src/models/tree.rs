//! CART regression trees: exact greedy splits on midpoint thresholds.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, FittedModel, TreeParams};
use crate::error::Result;

/// One node of a fitted tree, stored flat. Internal nodes carry a feature,
/// threshold and both child indices; leaves carry none of those. Every node
/// keeps `value` (what it would predict as a leaf) and `coverage` (training
/// rows that reached it), which exact Shapley computation relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub value: f64,
    pub coverage: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// A fitted tree; node 0 is the root, children follow their parent
/// (preorder, left subtree first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Routing rule: `x[feature] <= threshold` goes left.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match (node.feature, node.threshold) {
                (Some(f), Some(t)) => {
                    i = if row[f] <= t { node.left.unwrap() } else { node.right.unwrap() };
                }
                _ => return node.value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match (nodes[i].left, nodes[i].right) {
                (Some(l), Some(r)) => 1 + walk(nodes, l).max(walk(nodes, r)),
                _ => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Growth bounds plus the leaf-value shrinkage used by boosting rounds.
/// `leaf_l2 = 0` makes leaves plain sample means.
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub leaf_l2: f64,
}

impl GrowParams {
    pub fn plain(p: &TreeParams) -> Self {
        GrowParams {
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            min_samples_leaf: p.min_samples_leaf,
            leaf_l2: 0.0,
        }
    }
}

/// Which columns a split may consider.
pub(crate) enum FeatureChoice<'r> {
    /// A fixed candidate list (ascending), same at every node.
    Fixed(Vec<usize>),
    /// Forest-style: draw `m` distinct columns per node.
    PerSplit { m: usize, pool: Vec<usize>, rng: &'r mut ChaCha8Rng },
}

impl FeatureChoice<'_> {
    pub fn all(p: usize) -> FeatureChoice<'static> {
        FeatureChoice::Fixed((0..p).collect())
    }

    /// Candidate columns for one node, ascending so that equal-gain ties
    /// resolve to the lowest feature index.
    fn candidates(&mut self) -> &[usize] {
        match self {
            FeatureChoice::Fixed(v) => v,
            FeatureChoice::PerSplit { m, pool, rng } => {
                let m = *m;
                // Partial Fisher-Yates over the pool, which stays a
                // permutation of 0..p across calls.
                for i in 0..m {
                    let j = rng.random_range(i..pool.len());
                    pool.swap(i, j);
                }
                pool[..m].sort_unstable();
                &pool[..m]
            }
        }
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Greedy recursive builder over the row set `rows` (indices into `x`).
pub(crate) fn grow_tree(
    x: &ArrayView2<f64>,
    target: &[f64],
    rows: Vec<usize>,
    gp: &GrowParams,
    fc: &mut FeatureChoice<'_>,
) -> Tree {
    let mut nodes = Vec::new();
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    build(x, target, rows, 0, gp, fc, &mut nodes, &mut scratch);
    Tree { nodes }
}

fn build(
    x: &ArrayView2<f64>,
    target: &[f64],
    rows: Vec<usize>,
    depth: usize,
    gp: &GrowParams,
    fc: &mut FeatureChoice<'_>,
    nodes: &mut Vec<TreeNode>,
    scratch: &mut Vec<(f64, f64)>,
) -> usize {
    let n = rows.len();
    let sum: f64 = rows.iter().map(|&r| target[r]).sum();
    let value = sum / (n as f64 + gp.leaf_l2);
    let index = nodes.len();
    nodes.push(TreeNode { feature: None, threshold: None, left: None, right: None, value, coverage: n });

    if depth >= gp.max_depth || n < gp.min_samples_split {
        return index;
    }
    let best = match find_split(x, target, &rows, sum, gp, fc, scratch) {
        Some(b) => b,
        None => return index,
    };

    let mut left_rows = Vec::with_capacity(n);
    let mut right_rows = Vec::with_capacity(n);
    for &r in &rows {
        if x[[r, best.feature]] <= best.threshold {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    drop(rows);
    let left = build(x, target, left_rows, depth + 1, gp, fc, nodes, scratch);
    let right = build(x, target, right_rows, depth + 1, gp, fc, nodes, scratch);
    let node = &mut nodes[index];
    node.feature = Some(best.feature);
    node.threshold = Some(best.threshold);
    node.left = Some(left);
    node.right = Some(right);
    index
}

/// Scans every candidate feature for the midpoint threshold with the largest
/// strictly positive reduction in sum of squared deviations. Ties keep the
/// earlier candidate, so lowest feature index, then lowest threshold, wins.
fn find_split(
    x: &ArrayView2<f64>,
    target: &[f64],
    rows: &[usize],
    total_sum: f64,
    gp: &GrowParams,
    fc: &mut FeatureChoice<'_>,
    scratch: &mut Vec<(f64, f64)>,
) -> Option<BestSplit> {
    let n = rows.len();
    let nf = n as f64;
    let parent_score = total_sum * total_sum / nf;
    let mut best: Option<BestSplit> = None;

    for &feature in fc.candidates() {
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (x[[r, feature]], target[r])));
        // Ties in the feature value are ordered by target so prefix sums are
        // identical for any permutation of the input rows.
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        for i in 0..n - 1 {
            left_sum += scratch[i].1;
            left_n += 1;
            let (a, b) = (scratch[i].0, scratch[i + 1].0);
            if a == b {
                continue;
            }
            let threshold = 0.5 * (a + b);
            // Adjacent floats can round the midpoint onto b; such a
            // threshold would not separate the two sides.
            if threshold >= b {
                continue;
            }
            let right_n = n - left_n;
            if left_n < gp.min_samples_leaf || right_n < gp.min_samples_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64
                - parent_score;
            if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                best = Some(BestSplit { gain, feature, threshold });
            }
        }
    }
    best
}

/// A single fitted CART tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub tree: Tree,
    pub params: TreeParams,
    pub feature_codes: Vec<String>,
}

/// Fits a CART regression tree: exact greedy splits minimizing within-node
/// sum of squared deviations, leaves predicting their sample mean.
pub fn fit_decision_tree(d: &Dataset, params: &TreeParams) -> Result<FittedModel> {
    params.validate()?;
    let rows: Vec<usize> = (0..d.n()).collect();
    let mut fc = FeatureChoice::all(d.p());
    let tree = grow_tree(&d.x.view(), d.y.as_slice().expect("standard layout"), rows, &GrowParams::plain(params), &mut fc);
    Ok(FittedModel::Tree(TreeModel { tree, params: params.clone(), feature_codes: d.codes.clone() }))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::dataset;
    use super::*;
    use crate::models::{fit, predict, LearnerParams};

    fn params(max_depth: usize, min_split: usize, min_leaf: usize) -> TreeParams {
        TreeParams { max_depth, min_samples_split: min_split, min_samples_leaf: min_leaf }
    }

    fn tree_of(m: &FittedModel) -> &Tree {
        match m {
            FittedModel::Tree(t) => &t.tree,
            _ => panic!("not a tree"),
        }
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let d = dataset(&[&[1.0], &[2.0], &[3.0]], &[4.0, 4.0, 4.0]);
        let m = fit_decision_tree(&d, &params(5, 2, 1)).unwrap();
        let t = tree_of(&m);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].value, 4.0);
        assert_eq!(t.nodes[0].coverage, 3);
    }

    #[test]
    fn step_function_splits_at_straddling_midpoint() {
        let d = dataset(
            &[&[1.0], &[2.0], &[4.0], &[7.0], &[8.0]],
            &[0.0, 0.0, 0.0, 1.0, 1.0],
        );
        let m = fit_decision_tree(&d, &params(1, 2, 1)).unwrap();
        let t = tree_of(&m);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.nodes[0].feature, Some(0));
        assert_eq!(t.nodes[0].threshold, Some(5.5));
        let left = &t.nodes[t.nodes[0].left.unwrap()];
        let right = &t.nodes[t.nodes[0].right.unwrap()];
        assert_eq!(left.value, 0.0);
        assert_eq!(right.value, 1.0);
        assert_eq!(left.coverage, 3);
        assert_eq!(right.coverage, 2);
    }

    #[test]
    fn min_samples_leaf_equal_to_n_forces_single_leaf() {
        let d = dataset(&[&[1.0], &[2.0], &[3.0], &[4.0]], &[1.0, 2.0, 3.0, 4.0]);
        let m = fit_decision_tree(&d, &params(4, 2, 4)).unwrap();
        assert_eq!(tree_of(&m).nodes.len(), 1);
        assert_eq!(tree_of(&m).nodes[0].value, 2.5);
    }

    #[test]
    fn max_depth_zero_is_the_mean() {
        let d = dataset(&[&[1.0], &[9.0]], &[2.0, 6.0]);
        let m = fit_decision_tree(&d, &params(0, 2, 1)).unwrap();
        assert_eq!(tree_of(&m).nodes.len(), 1);
        assert_eq!(predict(&m, d.x.view(), &d.codes).unwrap()[0], 4.0);
    }

    #[test]
    fn leaf_coverages_sum_to_n_and_respect_min_leaf() {
        let d = dataset(
            &[&[3.0, 1.0], &[1.0, 2.0], &[4.0, 0.5], &[2.0, 2.5], &[5.0, 1.5], &[0.5, 3.0]],
            &[3.0, 1.0, 4.0, 2.0, 5.0, 0.5],
        );
        let m = fit_decision_tree(&d, &params(3, 2, 2)).unwrap();
        let t = tree_of(&m);
        let leaf_cov: usize = t.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.coverage).sum();
        assert_eq!(leaf_cov, 6);
        assert!(t.nodes.iter().filter(|n| n.is_leaf()).all(|n| n.coverage >= 2));
        assert!(t.depth() <= 3);
    }

    #[test]
    fn ties_pick_lowest_feature_then_lowest_threshold() {
        // Identical columns: both give the same gain everywhere.
        let d = dataset(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0], &[4.0, 4.0]], &[0.0, 0.0, 1.0, 1.0]);
        let m = fit_decision_tree(&d, &params(1, 2, 1)).unwrap();
        let root = &tree_of(&m).nodes[0];
        assert_eq!(root.feature, Some(0));
        assert_eq!(root.threshold, Some(2.5));
    }

    #[test]
    fn permuting_rows_changes_nothing_material() {
        let rows: Vec<Vec<f64>> = vec![
            vec![3.0, 1.0],
            vec![1.0, 2.0],
            vec![4.0, 0.5],
            vec![2.0, 2.5],
            vec![5.0, 1.5],
            vec![0.5, 3.0],
        ];
        let y = [3.0, 1.0, 4.0, 2.0, 5.0, 0.25];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let d1 = dataset(&refs, &y);
        let perm = [5, 2, 0, 4, 1, 3];
        let prows: Vec<&[f64]> = perm.iter().map(|&i| rows[i].as_slice()).collect();
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let d2 = dataset(&prows, &py);

        let p = LearnerParams::Tree(params(3, 2, 1));
        let m1 = fit(&d1, &p).unwrap();
        let m2 = fit(&d2, &p).unwrap();
        let out1 = predict(&m1, d1.x.view(), &d1.codes).unwrap();
        let out2 = predict(&m2, d1.x.view(), &d1.codes).unwrap();
        for (a, b) in out1.iter().zip(out2.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let d = dataset(
            &[&[0.1, 7.3], &[2.7, 1.9], &[3.3, 2.2], &[0.9, 5.5], &[1.4142135623730951, 2.718281828459045]],
            &[1.01, 2.5, 3.25, 0.125, 2.0],
        );
        let m = fit_decision_tree(&d, &params(3, 2, 1)).unwrap();
        let json = crate::models::model_to_json(&m);
        let back = crate::models::model_from_json(&json).unwrap();
        assert_eq!(back, m);
        let json2 = crate::models::model_to_json(&back);
        assert_eq!(json, json2);
    }
}
