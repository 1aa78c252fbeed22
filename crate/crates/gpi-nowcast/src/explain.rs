//! Exact Shapley-value explanations for tree ensembles, with an exponential
//! brute-force oracle for verifying the polynomial-time algorithm.
//!
//! The value function is the tree-path-dependent conditional expectation:
//! features outside the coalition are marginalized by descending both
//! children weighted by their training coverage. The fast path is a port of
//! the original polynomial-time tree algorithm; leaf values and coverages
//! alone determine it, so L2-shrunk leaves are handled exactly.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::ingest::CountryCode;
use crate::models::{Dataset, ElasticNetModel, FittedModel, Tree};

/// Which prediction an explanation is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationMeta {
    pub target_month: YearMonth,
    pub horizon: u32,
}

/// Additive decomposition of one prediction: `output_value` equals
/// `base_value` plus the sum of contributions (local accuracy, within
/// 1e-9). Contributions are keyed by feature code in fit-time column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub target_month: YearMonth,
    pub horizon: u32,
    pub base_value: f64,
    pub output_value: f64,
    pub contributions: Vec<(String, f64)>,
}

impl ShapExplanation {
    pub fn contribution_sum(&self) -> f64 {
        self.contributions.iter().map(|(_, phi)| phi).sum()
    }
}

/// Mean absolute SHAP value per feature over a set of explanations,
/// descending, ties broken by code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub entries: Vec<(String, f64)>,
}

/// One feature's share of one prediction, as serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionEntry {
    pub code: String,
    pub phi: f64,
}

/// A serialized explanation: the full decomposition plus the nonzero
/// contributions partitioned into those pushing the prediction up and
/// down, each sorted by magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDocument {
    pub country: CountryCode,
    pub target_month: YearMonth,
    pub horizon: u32,
    pub base_value: f64,
    pub output_value: f64,
    pub contributions: Vec<ContributionEntry>,
    pub positive: Vec<ContributionEntry>,
    pub negative: Vec<ContributionEntry>,
}

/// The trees behind a model, with the weight each tree's output carries
/// and the constant added on top.
fn tree_ensemble(m: &FittedModel) -> Result<(Vec<&Tree>, f64, f64)> {
    match m {
        FittedModel::Tree(t) => Ok((vec![&t.tree], 1.0, 0.0)),
        FittedModel::Forest(f) => Ok((f.trees.iter().collect(), 1.0 / f.trees.len() as f64, 0.0)),
        FittedModel::Gbt(g) => Ok((g.trees.iter().collect(), g.params.learning_rate, g.base_score)),
        other => Err(Error::model(format!(
            "explanations require a tree-based model, got {}",
            other.kind()
        ))),
    }
}

fn check_instance(codes: &[String], x: ArrayView1<f64>, background: &Dataset) -> Result<()> {
    if background.codes != codes {
        return Err(Error::data(format!(
            "background columns do not match the model's {} fit-time columns",
            codes.len()
        )));
    }
    if x.len() != codes.len() {
        return Err(Error::data(format!(
            "instance has {} features, model expects {}",
            x.len(),
            codes.len()
        )));
    }
    if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::data(format!("instance feature {} is not finite", codes[bad])));
    }
    Ok(())
}

/// Coverage-weighted expected output of each node, computed from leaf
/// values alone; node 0 holds the tree's expectation over its training set.
fn node_expectations(tree: &Tree) -> Vec<f64> {
    fn walk(tree: &Tree, i: usize, out: &mut [f64]) -> f64 {
        let n = &tree.nodes[i];
        let e = match (n.left, n.right) {
            (Some(l), Some(r)) => {
                let wl = tree.nodes[l].coverage as f64 * walk(tree, l, out);
                let wr = tree.nodes[r].coverage as f64 * walk(tree, r, out);
                (wl + wr) / n.coverage as f64
            }
            _ => n.value,
        };
        out[i] = e;
        e
    }
    let mut out = vec![0.0; tree.nodes.len()];
    walk(tree, 0, &mut out);
    out
}

#[derive(Debug, Clone, Default)]
struct PathItem {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(
    path: &mut [PathItem],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    path[unique_depth] = PathItem {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..unique_depth).rev() {
        path[i + 1].pweight +=
            one_fraction * path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        path[i].pweight =
            zero_fraction * path[i].pweight * (unique_depth - i) as f64 / (unique_depth + 1) as f64;
    }
}

fn unwind_path(path: &mut [PathItem], unique_depth: usize, path_index: usize) {
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathItem], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = path[path_index].one_fraction;
    let zero_fraction = path[path_index].zero_fraction;
    let mut next_one_portion = path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}

#[allow(clippy::too_many_arguments)]
fn shap_recurse(
    tree: &Tree,
    x: ArrayView1<f64>,
    scale: f64,
    phi: &mut [f64],
    node_index: usize,
    unique_path: &mut [PathItem],
    unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature: Option<usize>,
) {
    extend_path(unique_path, unique_depth, parent_zero_fraction, parent_one_fraction, parent_feature);
    let node = &tree.nodes[node_index];
    let mut unique_depth = unique_depth;
    match (node.feature, node.threshold, node.left, node.right) {
        (Some(feature), Some(threshold), Some(left), Some(right)) => {
            let (hot, cold) = if x[feature] <= threshold { (left, right) } else { (right, left) };
            let hot_zero = tree.nodes[hot].coverage as f64 / node.coverage as f64;
            let cold_zero = tree.nodes[cold].coverage as f64 / node.coverage as f64;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(pi) = (1..=unique_depth).find(|&i| unique_path[i].feature == Some(feature)) {
                incoming_zero = unique_path[pi].zero_fraction;
                incoming_one = unique_path[pi].one_fraction;
                unwind_path(unique_path, unique_depth, pi);
                unique_depth -= 1;
            }
            let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
            child_path[..parent_path.len()].clone_from_slice(parent_path);
            shap_recurse(
                tree,
                x,
                scale,
                phi,
                hot,
                child_path,
                unique_depth + 1,
                hot_zero * incoming_zero,
                incoming_one,
                Some(feature),
            );
            child_path[..parent_path.len()].clone_from_slice(parent_path);
            shap_recurse(
                tree,
                x,
                scale,
                phi,
                cold,
                child_path,
                unique_depth + 1,
                cold_zero * incoming_zero,
                0.0,
                Some(feature),
            );
        }
        _ => {
            for i in 1..=unique_depth {
                let weight = unwound_path_sum(unique_path, unique_depth, i);
                let item = &unique_path[i];
                let feature = item.feature.expect("path items past the root carry a feature");
                phi[feature] += weight * (item.one_fraction - item.zero_fraction) * node.value * scale;
            }
        }
    }
}

fn shap_single_tree(tree: &Tree, x: ArrayView1<f64>, scale: f64, phi: &mut [f64]) {
    let depth = tree.depth() + 2;
    let mut path = vec![PathItem::default(); depth * (depth + 1) / 2];
    shap_recurse(tree, x, scale, phi, 0, &mut path, 0, 1.0, 1.0, None);
}

/// Exact Shapley values for one instance under a tree-based model. The base
/// value is the ensemble's coverage-weighted expected output, which is its
/// expectation over the training window the background dataset represents;
/// local accuracy then holds to within accumulation error.
pub fn tree_shap(
    m: &FittedModel,
    x: ArrayView1<f64>,
    background: &Dataset,
    meta: ExplanationMeta,
) -> Result<ShapExplanation> {
    let (trees, scale, base_extra) = tree_ensemble(m)?;
    check_instance(m.feature_codes(), x, background)?;
    let p = m.feature_codes().len();
    let mut phi = vec![0.0; p];
    let mut base_value = base_extra;
    for tree in &trees {
        base_value += scale * node_expectations(tree)[0];
        shap_single_tree(tree, x, scale, &mut phi);
    }
    let output_value = m.predict_row(x);
    debug_assert!(
        (base_value + phi.iter().sum::<f64>() - output_value).abs() < 1e-9,
        "local accuracy violated"
    );
    Ok(ShapExplanation {
        target_month: meta.target_month,
        horizon: meta.horizon,
        base_value,
        output_value,
        contributions: m.feature_codes().iter().cloned().zip(phi).collect(),
    })
}

/// Expected output of a tree when features in `mask` are fixed to `x` and
/// the rest are marginalized by coverage-weighted descent.
fn cond_expectation(tree: &Tree, i: usize, mask: usize, x: ArrayView1<f64>) -> f64 {
    let n = &tree.nodes[i];
    match (n.feature, n.threshold, n.left, n.right) {
        (Some(f), Some(t), Some(l), Some(r)) => {
            if mask & (1 << f) != 0 {
                cond_expectation(tree, if x[f] <= t { l } else { r }, mask, x)
            } else {
                (tree.nodes[l].coverage as f64 * cond_expectation(tree, l, mask, x)
                    + tree.nodes[r].coverage as f64 * cond_expectation(tree, r, mask, x))
                    / n.coverage as f64
            }
        }
        _ => n.value,
    }
}

/// C(n, k) exactly; the multiplicative form stays integral at every step
/// and n ≤ 19 keeps it far from overflow.
fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1u64;
    for i in 0..k {
        c = c * (n - i) as u64 / (i + 1) as u64;
    }
    c as f64
}

/// Classical Shapley values by full subset enumeration, the test oracle for
/// [`tree_shap`]. Refuses more than 20 features.
pub fn brute_force_shapley(
    m: &FittedModel,
    x: ArrayView1<f64>,
    background: &Dataset,
) -> Result<Vec<(String, f64)>> {
    let (trees, scale, base_extra) = tree_ensemble(m)?;
    check_instance(m.feature_codes(), x, background)?;
    let p = m.feature_codes().len();
    if p > 20 {
        return Err(Error::config(format!(
            "brute-force Shapley over {p} features would enumerate 2^{p} subsets; limit is 20"
        )));
    }
    let n_masks = 1usize << p;
    let mut v = vec![base_extra; n_masks];
    for (mask, value) in v.iter_mut().enumerate() {
        for tree in &trees {
            *value += scale * cond_expectation(tree, 0, mask, x);
        }
    }
    // weight of a coalition of size s: s!(p-1-s)!/p! = 1/(p*C(p-1, s))
    let weight: Vec<f64> = (0..p).map(|s| 1.0 / (p as f64 * binomial(p - 1, s))).collect();
    let mut phi = vec![0.0; p];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for mask in 0..n_masks {
            if mask & bit == 0 {
                *phi_j += weight[mask.count_ones() as usize] * (v[mask | bit] - v[mask]);
            }
        }
    }
    Ok(m.feature_codes().iter().cloned().zip(phi).collect())
}

/// Exact additive attributions for a linear model: each feature contributes
/// its coefficient times its displacement from the background mean.
pub fn linear_attributions(
    m: &ElasticNetModel,
    x: ArrayView1<f64>,
    background: &Dataset,
    meta: ExplanationMeta,
) -> Result<ShapExplanation> {
    check_instance(&m.feature_codes, x, background)?;
    let n = background.n() as f64;
    let mut base_value = m.intercept;
    let mut contributions = Vec::with_capacity(m.feature_codes.len());
    for (j, code) in m.feature_codes.iter().enumerate() {
        let mean = background.x.column(j).sum() / n;
        base_value += m.coefficients[j] * mean;
        contributions.push((code.clone(), m.coefficients[j] * (x[j] - mean)));
    }
    Ok(ShapExplanation {
        target_month: meta.target_month,
        horizon: meta.horizon,
        base_value,
        output_value: m.predict_row(x),
        contributions,
    })
}

/// Mean absolute contribution per feature across explanations, sorted
/// descending with ties broken by code. All explanations must cover the
/// same feature set.
pub fn global_importance(explanations: &[ShapExplanation]) -> Result<GlobalImportance> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::data("global importance needs at least one explanation"))?;
    let codes: Vec<&String> = first.contributions.iter().map(|(c, _)| c).collect();
    let mut sums = vec![0.0; codes.len()];
    for e in explanations {
        if e.contributions.len() != codes.len()
            || e.contributions.iter().zip(&codes).any(|((c, _), want)| c != *want)
        {
            return Err(Error::data("explanations cover inconsistent feature sets"));
        }
        for (sum, (_, phi)) in sums.iter_mut().zip(&e.contributions) {
            *sum += phi.abs();
        }
    }
    let n = explanations.len() as f64;
    let mut entries: Vec<(String, f64)> =
        codes.into_iter().cloned().zip(sums.into_iter().map(|s| s / n)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(GlobalImportance { entries })
}

/// Explains one instance under whichever model supports it: exact Shapley
/// values for tree ensembles, exact linear attributions for the elastic
/// net. SVR has no explanation support.
pub fn shap_explanation(
    m: &FittedModel,
    x: ArrayView1<f64>,
    background: &Dataset,
    meta: ExplanationMeta,
) -> Result<ShapExplanation> {
    match m {
        FittedModel::Tree(_) | FittedModel::Forest(_) | FittedModel::Gbt(_) => {
            tree_shap(m, x, background, meta)
        }
        FittedModel::ElasticNet(en) => linear_attributions(en, x, background, meta),
        FittedModel::Svr(_) => Err(Error::model("svr models are outside explanation scope")),
    }
}

/// Explains one prediction as a serializable document; see
/// [`shap_explanation`] for which models are supported.
pub fn explain_prediction(
    m: &FittedModel,
    x: ArrayView1<f64>,
    background: &Dataset,
    country: CountryCode,
    meta: ExplanationMeta,
) -> Result<ExplanationDocument> {
    let explanation = shap_explanation(m, x, background, meta)?;
    let entry = |(code, phi): &(String, f64)| ContributionEntry { code: code.clone(), phi: *phi };
    let mut positive: Vec<ContributionEntry> =
        explanation.contributions.iter().filter(|(_, p)| *p > 0.0).map(entry).collect();
    let mut negative: Vec<ContributionEntry> =
        explanation.contributions.iter().filter(|(_, p)| *p < 0.0).map(entry).collect();
    positive.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()).then_with(|| a.code.cmp(&b.code)));
    negative.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()).then_with(|| a.code.cmp(&b.code)));
    Ok(ExplanationDocument {
        country,
        target_month: meta.target_month,
        horizon: meta.horizon,
        base_value: explanation.base_value,
        output_value: explanation.output_value,
        contributions: explanation.contributions.iter().map(|c| entry(c)).collect(),
        positive,
        negative,
    })
}

/// Writes importances as CSV `code,mean_abs_shap` in ranked order.
pub fn write_global_importance_csv<W: std::io::Write>(
    mut out: W,
    gi: &GlobalImportance,
) -> Result<()> {
    let fail = |e: std::io::Error| Error::data(format!("importance write: {e}"));
    writeln!(out, "code,mean_abs_shap").map_err(fail)?;
    for (code, value) in &gi.entries {
        writeln!(out, "{code},{value}").map_err(fail)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array1, Array2};

    use crate::models::{
        fit_gbt, fit_random_forest, fit_svr_rbf, ForestModel, GbtParams, ForestParams, MaxFeatures,
        SvrParams, TreeModel, TreeNode, TreeParams,
    };
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn meta() -> ExplanationMeta {
        ExplanationMeta { target_month: "2015-06".parse().unwrap(), horizon: 1 }
    }

    fn leaf(value: f64, coverage: usize) -> TreeNode {
        TreeNode { feature: None, threshold: None, left: None, right: None, value, coverage }
    }

    fn branch(
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        value: f64,
        coverage: usize,
    ) -> TreeNode {
        TreeNode {
            feature: Some(feature),
            threshold: Some(threshold),
            left: Some(left),
            right: Some(right),
            value,
            coverage,
        }
    }

    fn tree_model(nodes: Vec<TreeNode>, codes: &[&str]) -> FittedModel {
        FittedModel::Tree(TreeModel {
            tree: Tree { nodes },
            params: TreeParams { max_depth: 4, min_samples_split: 2, min_samples_leaf: 1 },
            feature_codes: codes.iter().map(|c| c.to_string()).collect(),
        })
    }

    fn background(p: usize) -> Dataset {
        let codes: Vec<String> = (0..p).map(|j| format!("c{j:02}")).collect();
        Dataset::new(Array2::zeros((3, p)), arr1(&[1.0, 2.0, 3.0]), codes).unwrap()
    }

    fn background_for(m: &FittedModel) -> Dataset {
        let p = m.feature_codes().len();
        Dataset::new(
            Array2::zeros((3, p)),
            arr1(&[1.0, 2.0, 3.0]),
            m.feature_codes().to_vec(),
        )
        .unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn single_leaf_has_no_feature_dependence() {
        let m = tree_model(vec![leaf(3.25, 10)], &["c00", "c01"]);
        let e = tree_shap(&m, arr1(&[1.0, 9.0]).view(), &background(2), meta()).unwrap();
        assert_eq!(e.base_value, 3.25);
        assert_eq!(e.output_value, 3.25);
        for (_, phi) in &e.contributions {
            assert_eq!(*phi, 0.0);
        }
    }

    #[test]
    fn depth_one_coverage_split_matches_hand_enumeration() {
        // 70/30 coverage, leaves 2 and 5; going left must yield phi = 0.3*(2-5).
        let nodes = vec![branch(0, 0.5, 1, 2, 2.9, 10), leaf(2.0, 7), leaf(5.0, 3)];
        let m = tree_model(nodes, &["c00"]);
        let x = arr1(&[0.0]);
        let e = tree_shap(&m, x.view(), &background(1), meta()).unwrap();
        assert_close(e.base_value, 2.9, 1e-12);
        assert_close(e.contributions[0].1, 0.3 * (2.0 - 5.0), 1e-12);
        // single-player game: phi = f(x) - base, exactly
        assert_close(e.contributions[0].1, e.output_value - e.base_value, 1e-12);
        let oracle = brute_force_shapley(&m, x.view(), &background(1)).unwrap();
        assert_close(oracle[0].1, e.contributions[0].1, 1e-12);
    }

    #[test]
    fn symmetric_features_get_equal_contributions() {
        let nodes = vec![
            branch(0, 0.5, 1, 4, 1.0, 8),
            branch(1, 0.5, 2, 3, 0.5, 4),
            leaf(0.0, 2),
            leaf(1.0, 2),
            branch(1, 0.5, 5, 6, 1.5, 4),
            leaf(1.0, 2),
            leaf(2.0, 2),
        ];
        let m = tree_model(nodes, &["c00", "c01"]);
        let x = arr1(&[1.0, 1.0]);
        let e = tree_shap(&m, x.view(), &background(2), meta()).unwrap();
        assert_close(e.contributions[0].1, e.contributions[1].1, 1e-12);
        let oracle = brute_force_shapley(&m, x.view(), &background(2)).unwrap();
        for (got, want) in e.contributions.iter().zip(&oracle) {
            assert_close(got.1, want.1, 1e-12);
        }
    }

    #[test]
    fn null_player_gets_exactly_zero() {
        let nodes = vec![branch(0, 0.5, 1, 2, 2.9, 10), leaf(2.0, 7), leaf(5.0, 3)];
        let m = tree_model(nodes, &["c00", "c01"]);
        let e = tree_shap(&m, arr1(&[0.0, 42.0]).view(), &background(2), meta()).unwrap();
        assert_eq!(e.contributions[1].1, 0.0);
        let oracle = brute_force_shapley(&m, arr1(&[0.0, 42.0]).view(), &background(2)).unwrap();
        assert_eq!(oracle[1].1, 0.0);
    }

    #[test]
    fn forest_explanation_is_mean_of_tree_explanations() {
        let t1 = vec![branch(0, 0.5, 1, 2, 2.9, 10), leaf(2.0, 7), leaf(5.0, 3)];
        let t2 = vec![branch(1, 1.5, 1, 2, 2.5, 10), leaf(1.0, 5), leaf(4.0, 5)];
        let codes = &["c00", "c01"];
        let forest = FittedModel::Forest(ForestModel {
            trees: vec![Tree { nodes: t1.clone() }, Tree { nodes: t2.clone() }],
            params: ForestParams {
                tree: TreeParams { max_depth: 4, min_samples_split: 2, min_samples_leaf: 1 },
                n_estimators: 2,
                max_features: MaxFeatures::Fraction(1.0),
                seed: 0,
            },
            feature_codes: codes.iter().map(|c| c.to_string()).collect(),
        });
        let x = arr1(&[0.0, 2.0]);
        let whole = tree_shap(&forest, x.view(), &background(2), meta()).unwrap();
        let e1 = tree_shap(&tree_model(t1, codes), x.view(), &background(2), meta()).unwrap();
        let e2 = tree_shap(&tree_model(t2, codes), x.view(), &background(2), meta()).unwrap();
        assert_close(whole.base_value, (e1.base_value + e2.base_value) / 2.0, 1e-12);
        for j in 0..2 {
            let mean = (e1.contributions[j].1 + e2.contributions[j].1) / 2.0;
            assert_close(whole.contributions[j].1, mean, 1e-12);
        }
    }

    fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut x = Array2::zeros((n, p));
        for v in x.iter_mut() {
            *v = rng.random_range(0..12) as f64;
        }
        let y = Array1::from_iter((0..n).map(|i| {
            x[[i, 0]] - 0.5 * x[[i, 1 % p]] + 0.1 * rng.random_range(0..10) as f64
        }));
        let codes = (0..p).map(|j| format!("c{j:02}")).collect();
        Dataset::new(x, y, codes).unwrap()
    }

    #[test]
    fn fitted_forest_matches_oracle_with_local_accuracy() {
        let d = random_dataset(11, 40, 5);
        let params = ForestParams {
            tree: TreeParams { max_depth: 3, min_samples_split: 2, min_samples_leaf: 1 },
            n_estimators: 5,
            max_features: MaxFeatures::Fraction(0.6),
            seed: 3,
        };
        let m = fit_random_forest(&d, &params).unwrap();
        for i in 0..5 {
            let x = d.x.row(i);
            let e = tree_shap(&m, x, &d, meta()).unwrap();
            let oracle = brute_force_shapley(&m, x, &d).unwrap();
            for (got, want) in e.contributions.iter().zip(&oracle) {
                assert_close(got.1, want.1, 1e-9);
            }
            assert_close(e.base_value + e.contribution_sum(), m.predict_row(x), 1e-9);
            assert_close(e.output_value, m.predict_row(x), 1e-12);
        }
    }

    #[test]
    fn fitted_gbt_matches_oracle_with_shrunk_leaves() {
        let d = random_dataset(17, 36, 4);
        let params = GbtParams {
            n_estimators: 6,
            max_depth: 2,
            learning_rate: 0.3,
            colsample_bytree: 0.8,
            leaf_l2: 0.5,
            seed: 9,
        };
        let m = fit_gbt(&d, &params).unwrap();
        for i in 0..6 {
            let x = d.x.row(i);
            let e = tree_shap(&m, x, &d, meta()).unwrap();
            let oracle = brute_force_shapley(&m, x, &d).unwrap();
            for (got, want) in e.contributions.iter().zip(&oracle) {
                assert_close(got.1, want.1, 1e-9);
            }
            assert_close(e.base_value + e.contribution_sum(), m.predict_row(x), 1e-9);
        }
    }

    #[test]
    fn non_tree_models_are_rejected() {
        let d = random_dataset(5, 10, 3);
        let svr = fit_svr_rbf(
            &d,
            &SvrParams { c: 1.0, gamma: 0.1, epsilon: 0.1, tol: 1e-3, max_iter: 1000 },
        )
        .unwrap();
        let x = d.x.row(0);
        assert!(tree_shap(&svr, x, &d, meta()).is_err());
        assert!(brute_force_shapley(&svr, x, &d).is_err());
    }

    #[test]
    fn mismatched_background_or_instance_is_rejected() {
        let m = tree_model(vec![leaf(1.0, 5)], &["c00", "c01"]);
        let mut wrong = background(2);
        wrong.codes[1] = "zzz".into();
        assert!(tree_shap(&m, arr1(&[0.0, 0.0]).view(), &wrong, meta()).is_err());
        assert!(tree_shap(&m, arr1(&[0.0]).view(), &background(2), meta()).is_err());
        assert!(tree_shap(&m, arr1(&[0.0, f64::NAN]).view(), &background(2), meta()).is_err());
    }

    #[test]
    fn brute_force_refuses_wide_models() {
        let p = 21;
        let codes: Vec<String> = (0..p).map(|j| format!("c{j:02}")).collect();
        let refs: Vec<&str> = codes.iter().map(|s| s.as_str()).collect();
        let m = tree_model(vec![leaf(1.0, 5)], &refs);
        let x = Array1::zeros(p);
        let bg = Dataset::new(Array2::zeros((2, p)), arr1(&[1.0, 2.0]), codes).unwrap();
        let err = brute_force_shapley(&m, x.view(), &bg).unwrap_err();
        assert!(err.to_string().contains("limit is 20"), "{err}");
    }

    #[test]
    fn linear_attributions_are_exact() {
        let d = Dataset::new(
            arr1(&[1.0, 2.0, 2.0, 5.0, 3.0, 8.0]).into_shape_with_order((3, 2)).unwrap(),
            arr1(&[1.0, 2.0, 3.0]),
            vec!["c00".into(), "c01".into()],
        )
        .unwrap();
        let m = ElasticNetModel {
            coefficients: vec![2.0, 0.0],
            intercept: 1.0,
            feature_means: vec![2.0, 5.0],
            feature_scales: vec![1.0, 2.0],
            converged: true,
            n_iter: 3,
            params: crate::models::ElasticNetParams {
                alpha: 0.5,
                lambda: 0.1,
                max_iter: 100,
                tol: 1e-8,
            },
            feature_codes: vec!["c00".into(), "c01".into()],
        };
        let x = arr1(&[3.0, 9.0]);
        let e = linear_attributions(&m, x.view(), &d, meta()).unwrap();
        // background means are (2, 5): base = 1 + 2*2 = 5, phi0 = 2*(3-2) = 2
        assert_close(e.base_value, 5.0, 1e-12);
        assert_close(e.contributions[0].1, 2.0, 1e-12);
        assert_eq!(e.contributions[1].1, 0.0);
        assert_close(e.base_value + e.contribution_sum(), e.output_value, 1e-12);
    }

    #[test]
    fn global_importance_means_absolutes_and_ranks() {
        let mk = |phis: &[(&str, f64)]| ShapExplanation {
            target_month: "2015-06".parse().unwrap(),
            horizon: 1,
            base_value: 0.0,
            output_value: phis.iter().map(|(_, p)| p).sum(),
            contributions: phis.iter().map(|(c, p)| (c.to_string(), *p)).collect(),
        };
        let gi = global_importance(&[
            mk(&[("alpha", 2.0), ("beta", -1.0)]),
            mk(&[("alpha", 0.0), ("beta", -3.0)]),
        ])
        .unwrap();
        assert_eq!(gi.entries[0], ("beta".to_string(), 2.0));
        assert_eq!(gi.entries[1], ("alpha".to_string(), 1.0));

        let zero = global_importance(&[mk(&[("a", 0.0), ("b", 0.0)])]).unwrap();
        assert!(zero.entries.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(zero.entries[0].0, "a", "ties fall back to code order");

        assert!(global_importance(&[]).is_err());
        assert!(global_importance(&[mk(&[("a", 1.0)]), mk(&[("b", 1.0)])]).is_err());
    }

    #[test]
    fn explain_prediction_partitions_and_sorts() {
        let nodes = vec![
            branch(0, 0.5, 1, 2, 0.0, 10),
            branch(1, 0.5, 3, 4, -1.0, 5),
            leaf(4.0, 5),
            leaf(-3.0, 2),
            leaf(1.0, 3),
        ];
        let m = tree_model(nodes, &["c00", "c01"]);
        let x = arr1(&[0.0, 0.0]);
        let us: CountryCode = "US".parse().unwrap();
        let doc = explain_prediction(&m, x.view(), &background(2), us, meta()).unwrap();
        assert_close(
            doc.base_value + doc.contributions.iter().map(|c| c.phi).sum::<f64>(),
            doc.output_value,
            1e-9,
        );
        for pair in doc.positive.windows(2) {
            assert!(pair[0].phi.abs() >= pair[1].phi.abs());
        }
        for pair in doc.negative.windows(2) {
            assert!(pair[0].phi.abs() >= pair[1].phi.abs());
        }
        assert!(doc.positive.iter().all(|c| c.phi > 0.0));
        assert!(doc.negative.iter().all(|c| c.phi < 0.0));
        let partitioned = doc.positive.len() + doc.negative.len();
        let nonzero = doc.contributions.iter().filter(|c| c.phi != 0.0).count();
        assert_eq!(partitioned, nonzero);
    }

    #[test]
    fn constant_model_yields_empty_partitions() {
        let m = tree_model(vec![leaf(2.5, 4)], &["c00"]);
        let us: CountryCode = "US".parse().unwrap();
        let doc = explain_prediction(&m, arr1(&[1.0]).view(), &background(1), us, meta()).unwrap();
        assert!(doc.positive.is_empty());
        assert!(doc.negative.is_empty());
        assert_eq!(doc.base_value, doc.output_value);
    }

    #[test]
    fn svr_has_no_explanation_path() {
        let d = random_dataset(23, 8, 2);
        let svr = fit_svr_rbf(
            &d,
            &SvrParams { c: 1.0, gamma: 0.5, epsilon: 0.05, tol: 1e-3, max_iter: 1000 },
        )
        .unwrap();
        let us: CountryCode = "US".parse().unwrap();
        let err = explain_prediction(&svr, d.x.row(0), &d, us, meta()).unwrap_err();
        assert!(err.to_string().contains("svr"), "{err}");
    }

    #[test]
    fn importance_csv_format() {
        let gi = GlobalImportance {
            entries: vec![("190".to_string(), 0.5), ("010".to_string(), 0.125)],
        };
        let mut buf = Vec::new();
        write_global_importance_csv(&mut buf, &gi).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "code,mean_abs_shap\n190,0.5\n010,0.125\n");
    }
}
