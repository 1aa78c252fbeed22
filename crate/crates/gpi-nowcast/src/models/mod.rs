//! Five regression learners with one fit/predict contract.
//!
//! Every learner consumes a [`Dataset`] and returns a [`FittedModel`] that
//! remembers the feature codes it was trained on; prediction refuses columns
//! that do not match those codes. Models serialize to a versioned JSON
//! document and round-trip bit-exactly.

mod elastic_net;
mod forest;
mod gbt;
mod svr;
mod tree;

pub use elastic_net::ElasticNetModel;
pub use forest::ForestModel;
pub use gbt::GbtModel;
pub use svr::SvrModel;
pub use tree::{Tree, TreeModel, TreeNode};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training rows: one row per month, one column per event code.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// Column identifiers, bound into every fitted model.
    pub codes: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, codes: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::data(format!("dataset must be non-empty, got {}x{}", x.nrows(), x.ncols())));
        }
        if y.len() != x.nrows() {
            return Err(Error::data(format!("{} rows but {} targets", x.nrows(), y.len())));
        }
        if codes.len() != x.ncols() {
            return Err(Error::data(format!("{} columns but {} codes", x.ncols(), codes.len())));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("dataset contains non-finite values"));
        }
        Ok(Dataset { x, y, codes })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows restricted to `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            codes: self.codes.clone(),
        }
    }
}

/// Learner identifiers used in configs, file names and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    ElasticNet,
    Tree,
    Forest,
    Gbt,
    Svr,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 5] =
        [LearnerKind::ElasticNet, LearnerKind::Tree, LearnerKind::Forest, LearnerKind::Gbt, LearnerKind::Svr];

    pub fn tag(&self) -> &'static str {
        match self {
            LearnerKind::ElasticNet => "elastic_net",
            LearnerKind::Tree => "tree",
            LearnerKind::Forest => "forest",
            LearnerKind::Gbt => "gbt",
            LearnerKind::Svr => "svr",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown learner {s:?} (expected one of elastic_net, tree, forest, gbt, svr)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticNetParams {
    /// L1/L2 mix in [0,1]; 1 is pure lasso, 0 pure ridge.
    pub alpha: f64,
    /// Regularization strength, >= 0.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl ElasticNetParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("elastic net alpha {} outside [0,1]", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config(format!("elastic net lambda {} must be >= 0", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("elastic net tol {} must be > 0", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    /// Depth 0 means a single leaf.
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::config(format!("min_samples_split {} must be >= 2", self.min_samples_split)));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::config(format!("min_samples_leaf {} must be >= 1", self.min_samples_leaf)));
        }
        Ok(())
    }
}

/// Per-split feature budget of a forest: a fixed count or a fraction of the
/// feature count (rounded up). In JSON, integers mean counts and decimals
/// mean fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaxFeatures {
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    /// Features to draw per split given `p` columns.
    pub fn resolve(&self, p: usize) -> Result<usize> {
        match *self {
            MaxFeatures::Count(c) => {
                if c == 0 || c > p {
                    Err(Error::config(format!("max_features {c} outside 1..={p}")))
                } else {
                    Ok(c)
                }
            }
            MaxFeatures::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    Err(Error::config(format!("max_features fraction {f} outside (0,1]")))
                } else {
                    Ok(((f * p as f64).ceil() as usize).clamp(1, p))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub n_estimators: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.n_estimators == 0 {
            return Err(Error::config("forest n_estimators must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_estimators: usize,
    /// Depth 0 degenerates every round to a single (zero-mean) leaf.
    pub max_depth: usize,
    pub learning_rate: f64,
    pub colsample_bytree: f64,
    /// L2 shrinkage on leaf values: leaf = sum(residuals) / (count + leaf_l2).
    pub leaf_l2: f64,
    pub seed: u64,
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::config("gbt n_estimators must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(format!("learning_rate {} outside (0,1]", self.learning_rate)));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return Err(Error::config(format!("colsample_bytree {} outside (0,1]", self.colsample_bytree)));
        }
        if !(self.leaf_l2 >= 0.0) {
            return Err(Error::config(format!("leaf_l2 {} must be >= 0", self.leaf_l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    /// Half-width of the insensitive tube around the fit.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::config(format!("svr c {} must be > 0", self.c)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config(format!("svr gamma {} must be > 0", self.gamma)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config(format!("svr epsilon {} must be >= 0", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config(format!("svr tol {} must be > 0", self.tol)));
        }
        Ok(())
    }
}

/// One learner's full parameter set; what a tuning grid enumerates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum LearnerParams {
    ElasticNet(ElasticNetParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Gbt(GbtParams),
    Svr(SvrParams),
}

impl LearnerParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::ElasticNet(_) => LearnerKind::ElasticNet,
            LearnerParams::Tree(_) => LearnerKind::Tree,
            LearnerParams::Forest(_) => LearnerKind::Forest,
            LearnerParams::Gbt(_) => LearnerKind::Gbt,
            LearnerParams::Svr(_) => LearnerKind::Svr,
        }
    }

    /// Copy with the sampling seed replaced where the learner has one.
    /// The fit harness owns seeds; grids never carry meaningful ones.
    pub fn with_seed(&self, seed: u64) -> LearnerParams {
        match self {
            LearnerParams::Forest(p) => LearnerParams::Forest(ForestParams { seed, ..p.clone() }),
            LearnerParams::Gbt(p) => LearnerParams::Gbt(GbtParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }
}

/// Any trained regressor. Immutable once fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    ElasticNet(ElasticNetModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Gbt(GbtModel),
    Svr(SvrModel),
}

impl FittedModel {
    pub fn kind(&self) -> LearnerKind {
        match self {
            FittedModel::ElasticNet(_) => LearnerKind::ElasticNet,
            FittedModel::Tree(_) => LearnerKind::Tree,
            FittedModel::Forest(_) => LearnerKind::Forest,
            FittedModel::Gbt(_) => LearnerKind::Gbt,
            FittedModel::Svr(_) => LearnerKind::Svr,
        }
    }

    pub fn feature_codes(&self) -> &[String] {
        match self {
            FittedModel::ElasticNet(m) => &m.feature_codes,
            FittedModel::Tree(m) => &m.feature_codes,
            FittedModel::Forest(m) => &m.feature_codes,
            FittedModel::Gbt(m) => &m.feature_codes,
            FittedModel::Svr(m) => &m.feature_codes,
        }
    }

    /// Raw per-row prediction; callers must have validated column identity.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        match self {
            FittedModel::ElasticNet(m) => m.predict_row(row),
            FittedModel::Tree(m) => m.tree.predict_row(row),
            FittedModel::Forest(m) => m.predict_row(row),
            FittedModel::Gbt(m) => m.predict_row(row),
            FittedModel::Svr(m) => m.predict_row(row),
        }
    }
}

/// Fits any learner to a dataset.
pub fn fit(d: &Dataset, params: &LearnerParams) -> Result<FittedModel> {
    match params {
        LearnerParams::ElasticNet(p) => elastic_net::fit_elastic_net(d, p),
        LearnerParams::Tree(p) => tree::fit_decision_tree(d, p),
        LearnerParams::Forest(p) => forest::fit_random_forest(d, p),
        LearnerParams::Gbt(p) => gbt::fit_gbt(d, p),
        LearnerParams::Svr(p) => svr::fit_svr_rbf(d, p),
    }
}

pub use elastic_net::fit_elastic_net;
pub use forest::fit_random_forest;
pub use gbt::fit_gbt;
pub use svr::fit_svr_rbf;
pub use tree::fit_decision_tree;

/// Predicts rows whose columns carry the given identifiers, which must equal
/// the model's fit-time codes in order.
pub fn predict(m: &FittedModel, x: ArrayView2<f64>, codes: &[String]) -> Result<Array1<f64>> {
    let fitted = m.feature_codes();
    if codes.len() != fitted.len() {
        return Err(Error::model(format!(
            "predict: {} columns but the model was fitted on {}",
            codes.len(),
            fitted.len()
        )));
    }
    for (i, (got, want)) in codes.iter().zip(fitted).enumerate() {
        if got != want {
            return Err(Error::model(format!(
                "predict: column {i} is {got:?} but the model was fitted on {want:?}"
            )));
        }
    }
    if x.ncols() != fitted.len() {
        return Err(Error::model(format!(
            "predict: matrix has {} columns, expected {}",
            x.ncols(),
            fitted.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::model("predict: non-finite feature value"));
    }
    Ok(Array1::from_iter(x.rows().into_iter().map(|r| m.predict_row(r))))
}

/// Rows in canonical order: sorted by feature values, ties by target.
///
/// Stochastic learners draw samples over row positions after this sort, so a
/// permutation of the training rows cannot change what gets sampled.
pub(crate) fn canonical_row_order(x: &ArrayView2<f64>, y: &ArrayView1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        for j in 0..x.ncols() {
            let c = x[[a, j]].total_cmp(&x[[b, j]]);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        y[a].total_cmp(&y[b])
    });
    order
}

/// On-disk model wrapper; bump the version on any schema change.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: FittedModel,
}

/// Serializes a model to its versioned JSON document.
pub fn model_to_json(m: &FittedModel) -> String {
    let doc = ModelDocument { format_version: MODEL_FORMAT_VERSION, model: m.clone() };
    serde_json::to_string_pretty(&doc).expect("model structs serialize")
}

/// Loads a model from [`model_to_json`] output.
pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::data(format!("model document: {e}")))?;
    if doc.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::data(format!(
            "model document version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            doc.format_version
        )));
    }
    Ok(doc.model)
}
