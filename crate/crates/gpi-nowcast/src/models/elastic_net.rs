//! Elastic net by cyclic coordinate descent.
//!
//! Objective, in original feature units:
//!   (1/2n)·‖y − Xβ − b‖² + λ·(α‖β‖₁ + (1−α)/2·‖β‖₂²)
//! The solver works on z-scored columns and a centered target, where the
//! coordinate update has the closed form
//!   w_j ← S(ρ_j, λα) / (1 + λ(1−α)),
//! with S the soft-threshold operator, then maps the weights back.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{Dataset, ElasticNetParams, FittedModel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    /// Per-column coefficients in original feature units.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Column means and population standard deviations from fit time; scale
    /// 0 marks a constant column whose coefficient is pinned to 0.
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub params: ElasticNetParams,
    pub feature_codes: Vec<String>,
}

impl ElasticNetModel {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>()
    }

    /// Weights in the solver's standardized space: w_j = β_j·s_j.
    pub fn standardized_weights(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.feature_scales).map(|(b, s)| b * s).collect()
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Fits by cyclic coordinate descent until the largest standardized-weight
/// change in a sweep drops below `tol`, or `max_iter` sweeps pass.
/// Constant columns get coefficient 0 rather than an error.
pub fn fit_elastic_net(d: &Dataset, params: &ElasticNetParams) -> Result<FittedModel> {
    params.validate()?;
    let n = d.n();
    let p = d.p();
    let nf = n as f64;

    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for j in 0..p {
        let col = d.x.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        means[j] = mean;
        scales[j] = var.sqrt();
    }
    let y_mean = d.y.sum() / nf;

    // Standardized design; constant columns stay all-zero and inert.
    let mut z = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        if scales[j] > 0.0 {
            for i in 0..n {
                z[[i, j]] = (d.x[[i, j]] - means[j]) / scales[j];
            }
        }
    }
    let active: Vec<usize> = (0..p).filter(|&j| scales[j] > 0.0).collect();

    let mut w = vec![0.0; p];
    let mut residual: Vec<f64> = d.y.iter().map(|y| y - y_mean).collect();
    let l1 = params.lambda * params.alpha;
    let l2 = params.lambda * (1.0 - params.alpha);

    let mut converged = false;
    let mut n_iter = 0;
    for _ in 0..params.max_iter {
        n_iter += 1;
        let mut max_delta = 0.0f64;
        for &j in &active {
            let zj = z.column(j);
            // With population-std scaling, z_jᵀz_j = n exactly, so the
            // partial residual correlation is dot/n + w_j.
            let dot: f64 = zj.iter().zip(&residual).map(|(a, b)| a * b).sum();
            let rho = dot / nf + w[j];
            let new = soft_threshold(rho, l1) / (1.0 + l2);
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, zij) in residual.iter_mut().zip(zj) {
                    *r -= delta * zij;
                }
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    let mut coefficients = vec![0.0; p];
    for &j in &active {
        coefficients[j] = w[j] / scales[j];
    }
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(FittedModel::ElasticNet(ElasticNetModel {
        coefficients,
        intercept,
        feature_means: means,
        feature_scales: scales,
        converged,
        n_iter,
        params: params.clone(),
        feature_codes: d.codes.clone(),
    }))
}

/// Largest violation of the subgradient optimality conditions in the
/// solver's standardized space; near 0 at an exact optimum.
///
/// For active weights the smooth gradient must cancel the L1 subgradient
/// exactly; for zero weights it must stay within the L1 threshold.
pub fn kkt_violation(d: &Dataset, m: &ElasticNetModel) -> f64 {
    let n = d.n() as f64;
    let w = m.standardized_weights();
    let l1 = m.params.lambda * m.params.alpha;
    let l2 = m.params.lambda * (1.0 - m.params.alpha);

    let mut residual: Vec<f64> = Vec::with_capacity(d.n());
    for i in 0..d.n() {
        residual.push(d.y[i] - m.predict_row(d.x.row(i)));
    }
    let mut worst = 0.0f64;
    for j in 0..d.p() {
        if m.feature_scales[j] == 0.0 {
            continue;
        }
        let mut dot = 0.0;
        for i in 0..d.n() {
            dot += (d.x[[i, j]] - m.feature_means[j]) / m.feature_scales[j] * residual[i];
        }
        // d(smooth)/dw_j = -dot/n + l2·w_j
        let grad = -dot / n + l2 * w[j];
        let violation = if w[j] != 0.0 { (grad + l1 * w[j].signum()).abs() } else { (grad.abs() - l1).max(0.0) };
        worst = worst.max(violation);
    }
    worst
}
