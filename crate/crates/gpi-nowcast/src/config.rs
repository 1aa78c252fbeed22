//! Run configuration: one JSON document drives every command, and all
//! randomness flows from its single mandatory seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnMap, CountryCode};
use crate::models::{
    ElasticNetParams, ForestParams, GbtParams, LearnerKind, LearnerParams, MaxFeatures, SvrParams,
    TreeParams,
};
use crate::tuning::Grid;

fn default_learners() -> Vec<LearnerKind> {
    LearnerKind::ALL.to_vec()
}

fn default_window() -> usize {
    72
}

fn default_horizons() -> u32 {
    6
}

fn default_cv_folds() -> usize {
    10
}

/// Everything a run needs. Unknown keys are rejected so a typo cannot
/// silently fall back to a default; the seed has no default at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Raw tab-delimited event files consumed by `ingest`.
    #[serde(default)]
    pub events: Vec<PathBuf>,
    /// Annual index CSV `country,year,score`; needed by `backtest` and
    /// `explain`.
    #[serde(default)]
    pub gpi: Option<PathBuf>,
    /// Count panel CSV, written by `ingest` and read by the other
    /// commands; defaults to `<output_dir>/panel.csv`.
    #[serde(default)]
    pub panel: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Countries to process; empty means every country present in both
    /// the panel and the index file.
    #[serde(default)]
    pub countries: Vec<CountryCode>,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerKind>,
    /// Training window width in months.
    #[serde(default = "default_window")]
    pub window: usize,
    /// How many months past the window's end to predict.
    #[serde(default = "default_horizons")]
    pub horizons: u32,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    /// Tune hyperparameters at the first window only.
    #[serde(default)]
    pub tune_once: bool,
    /// Months dropped from the front of the aligned series before
    /// backtesting, for data whose coverage starts after the first index
    /// anchor.
    #[serde(default)]
    pub start_offset: usize,
    pub seed: u64,
    #[serde(default)]
    pub column_map: ColumnMap,
    /// Also write per-window cross-validation scores during backtests.
    #[serde(default)]
    pub emit_cv: bool,
    #[serde(default)]
    pub grids: GridConfig,
}

impl RunConfig {
    pub fn panel_path(&self) -> PathBuf {
        self.panel.clone().unwrap_or_else(|| self.output_dir.join("panel.csv"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::config("learners list is empty"));
        }
        for (i, l) in self.learners.iter().enumerate() {
            if self.learners[..i].contains(l) {
                return Err(Error::config(format!("learner {l} listed twice")));
            }
        }
        for (i, c) in self.countries.iter().enumerate() {
            if self.countries[..i].contains(c) {
                return Err(Error::config(format!("country {c} listed twice")));
            }
        }
        if self.window < 12 {
            return Err(Error::config(format!("window {} months is below the minimum of 12", self.window)));
        }
        if self.horizons < 1 || self.horizons > 12 {
            return Err(Error::config(format!("horizons {} outside 1..=12", self.horizons)));
        }
        if self.cv_folds < 2 {
            return Err(Error::config(format!("cv_folds {} is below 2", self.cv_folds)));
        }
        self.column_map.validate()?;
        for l in &self.learners {
            self.grids.grid(*l)?;
        }
        Ok(())
    }
}

/// Candidate values per learner. Listed fields are crossed into a full
/// grid, enumerated lexicographically with the first field varying
/// slowest; scalar fields are fixed for every assignment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub elastic_net: ElasticNetGridConfig,
    pub tree: TreeGridConfig,
    pub forest: ForestGridConfig,
    pub gbt: GbtGridConfig,
    pub svr: SvrGridConfig,
}

impl GridConfig {
    pub fn grid(&self, kind: LearnerKind) -> Result<Grid> {
        match kind {
            LearnerKind::ElasticNet => self.elastic_net.to_grid(),
            LearnerKind::Tree => self.tree.to_grid(),
            LearnerKind::Forest => self.forest.to_grid(),
            LearnerKind::Gbt => self.gbt.to_grid(),
            LearnerKind::Svr => self.svr.to_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticNetGridConfig {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ElasticNetGridConfig {
    fn default() -> Self {
        ElasticNetGridConfig {
            alpha: vec![0.1, 0.5, 0.9],
            lambda: vec![0.001, 0.01, 0.1, 1.0],
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

impl ElasticNetGridConfig {
    pub fn to_grid(&self) -> Result<Grid> {
        let mut assignments = Vec::new();
        for &alpha in &self.alpha {
            for &lambda in &self.lambda {
                let p = ElasticNetParams { alpha, lambda, max_iter: self.max_iter, tol: self.tol };
                p.validate()?;
                assignments.push(LearnerParams::ElasticNet(p));
            }
        }
        Grid::new(LearnerKind::ElasticNet, assignments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeGridConfig {
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for TreeGridConfig {
    fn default() -> Self {
        TreeGridConfig {
            max_depth: vec![2, 4, 8],
            min_samples_split: vec![2, 8],
            min_samples_leaf: vec![1, 4],
        }
    }
}

impl TreeGridConfig {
    pub fn to_grid(&self) -> Result<Grid> {
        let mut assignments = Vec::new();
        for &max_depth in &self.max_depth {
            for &min_samples_split in &self.min_samples_split {
                for &min_samples_leaf in &self.min_samples_leaf {
                    let p = TreeParams { max_depth, min_samples_split, min_samples_leaf };
                    p.validate()?;
                    assignments.push(LearnerParams::Tree(p));
                }
            }
        }
        Grid::new(LearnerKind::Tree, assignments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestGridConfig {
    pub n_estimators: Vec<usize>,
    /// Fraction of columns considered per split.
    pub max_features: Vec<f64>,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestGridConfig {
    fn default() -> Self {
        ForestGridConfig {
            n_estimators: vec![100, 300],
            max_features: vec![0.33, 1.0],
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl ForestGridConfig {
    pub fn to_grid(&self) -> Result<Grid> {
        let mut assignments = Vec::new();
        for &n_estimators in &self.n_estimators {
            for &f in &self.max_features {
                let p = ForestParams {
                    tree: TreeParams {
                        max_depth: self.max_depth,
                        min_samples_split: self.min_samples_split,
                        min_samples_leaf: self.min_samples_leaf,
                    },
                    n_estimators,
                    max_features: MaxFeatures::Fraction(f),
                    seed: 0,
                };
                p.validate()?;
                assignments.push(LearnerParams::Forest(p));
            }
        }
        Grid::new(LearnerKind::Forest, assignments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtGridConfig {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub colsample_bytree: Vec<f64>,
    pub leaf_l2: f64,
}

impl Default for GbtGridConfig {
    fn default() -> Self {
        GbtGridConfig {
            n_estimators: vec![100, 300],
            max_depth: vec![2, 4],
            learning_rate: vec![0.05, 0.1],
            colsample_bytree: vec![0.5, 1.0],
            leaf_l2: 1.0,
        }
    }
}

impl GbtGridConfig {
    pub fn to_grid(&self) -> Result<Grid> {
        let mut assignments = Vec::new();
        for &n_estimators in &self.n_estimators {
            for &max_depth in &self.max_depth {
                for &learning_rate in &self.learning_rate {
                    for &colsample_bytree in &self.colsample_bytree {
                        let p = GbtParams {
                            n_estimators,
                            max_depth,
                            learning_rate,
                            colsample_bytree,
                            leaf_l2: self.leaf_l2,
                            seed: 0,
                        };
                        p.validate()?;
                        assignments.push(LearnerParams::Gbt(p));
                    }
                }
            }
        }
        Grid::new(LearnerKind::Gbt, assignments)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrGridConfig {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrGridConfig {
    fn default() -> Self {
        SvrGridConfig {
            c: vec![0.1, 1.0, 10.0],
            gamma: vec![0.01, 0.1, 1.0],
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 100_000,
        }
    }
}

impl SvrGridConfig {
    pub fn to_grid(&self) -> Result<Grid> {
        let mut assignments = Vec::new();
        for &c in &self.c {
            for &gamma in &self.gamma {
                let p = SvrParams {
                    c,
                    gamma,
                    epsilon: self.epsilon,
                    tol: self.tol,
                    max_iter: self.max_iter,
                };
                p.validate()?;
                assignments.push(LearnerParams::Svr(p));
            }
        }
        Grid::new(LearnerKind::Svr, assignments)
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
