//! Seeded k-fold cross-validation and exhaustive grid search.
//!
//! Fold assignment, fit seeds and the winner are all pure functions of
//! (dataset, grid, k, seed); ties on mean RMSE go to the assignment that
//! enumerates first.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::models::{self, Dataset, LearnerKind, LearnerParams};
use crate::rng;

/// An ordered list of candidate parameter assignments for one learner,
/// enumerated lexicographically over the per-parameter value lists (first
/// list varies slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learner: LearnerKind,
    pub assignments: Vec<LearnerParams>,
}

impl Grid {
    pub fn new(learner: LearnerKind, assignments: Vec<LearnerParams>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::config(format!("empty grid for {learner}")));
        }
        if let Some(bad) = assignments.iter().find(|a| a.kind() != learner) {
            return Err(Error::config(format!(
                "grid for {learner} contains a {} assignment",
                bad.kind()
            )));
        }
        Ok(Grid { learner, assignments })
    }

    pub fn singleton(params: LearnerParams) -> Self {
        Grid { learner: params.kind(), assignments: vec![params] }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

/// Cross-validation scores for one grid assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Position in the grid's enumeration order.
    pub assignment_id: usize,
    pub assignment: LearnerParams,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Splits indices 0..n into k shuffled folds with sizes differing by at most
/// one, as (train, test) pairs with both sides sorted ascending.
pub fn kfold_splits(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::config(format!("k-fold needs k <= n, got k={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng_from_seed(seed));

    let base = n / k;
    let extra = n % k;
    let mut splits = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let mut test: Vec<usize> = order[start..start + size].to_vec();
        let mut train: Vec<usize> =
            order[..start].iter().chain(&order[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        splits.push((train, test));
        start += size;
    }
    Ok(splits)
}

/// Scores every assignment with the same folds and returns the winner
/// (lowest mean RMSE, earliest enumeration on ties) plus all scores.
pub fn grid_search(
    d: &Dataset,
    grid: &Grid,
    k: usize,
    seed: u64,
) -> Result<(LearnerParams, Vec<CvResult>)> {
    if grid.is_empty() {
        return Err(Error::config("grid search over an empty grid"));
    }
    let folds = kfold_splits(d.n(), k, rng::mix(seed, rng::label_salt("folds")))?;
    for (i, (train, _)) in folds.iter().enumerate() {
        if train.len() < 2 {
            return Err(Error::config(format!(
                "fold {i} leaves only {} training rows; reduce k or add data",
                train.len()
            )));
        }
    }

    let fit_base = rng::mix(seed, rng::label_salt("cv_fit"));
    let mut results = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for (ai, assignment) in grid.assignments.iter().enumerate() {
        let per_assignment = rng::mix(fit_base, ai as u64);
        let mut fold_rmse = Vec::with_capacity(folds.len());
        for (f, (train, test)) in folds.iter().enumerate() {
            let params = assignment.with_seed(rng::mix(per_assignment, f as u64));
            let model = models::fit(&d.subset(train), &params)?;
            let test_set = d.subset(test);
            let pred = models::predict(&model, test_set.x.view(), &test_set.codes)?;
            fold_rmse.push(metrics::rmse(test_set.y.as_slice().unwrap(), pred.as_slice().unwrap())?);
        }
        let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
        results.push(CvResult { assignment_id: ai, assignment: assignment.clone(), fold_rmse, mean_rmse });
        if best.map_or(true, |b| mean_rmse < results[b].mean_rmse) {
            best = Some(ai);
        }
    }
    let winner = results[best.expect("non-empty grid")].assignment.clone();
    Ok((winner, results))
}

/// Writes scores as CSV `assignment_id,fold,rmse`, one row per fold.
pub fn write_cv_results<W: Write>(out: W, results: &[CvResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::data(format!("cv write: {e}"));
    w.write_record(["assignment_id", "fold", "rmse"]).map_err(fail)?;
    for r in results {
        for (fold, rmse) in r.fold_rmse.iter().enumerate() {
            w.write_record([r.assignment_id.to_string(), fold.to_string(), rmse.to_string()])
                .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::data(format!("cv write: {e}")))?;
    Ok(())
}
