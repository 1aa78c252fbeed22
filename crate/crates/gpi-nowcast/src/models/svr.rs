//! ε-insensitive support vector regression with an RBF kernel, solved by
//! pairwise (SMO-style) dual updates with maximal-violating-pair selection.
//!
//! Dual layout: 2n variables α = [α⁺; α⁻] with signs z = [+1…; −1…],
//! Q[t][s] = z_t·z_s·K(t mod n, s mod n) and the linear term
//! p = [ε − y; ε + y], minimizing ½αᵀQα + pᵀα subject to zᵀα = 0 and
//! 0 ≤ α ≤ C. The fitted function is f(x) = Σ(α⁺−α⁻)ᵢK(xᵢ,x) + b.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{Dataset, FittedModel, SvrParams};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    /// Standardized feature rows with nonzero dual coefficient.
    pub support_vectors: Vec<Vec<f64>>,
    /// α⁺ − α⁻ per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    /// False when the solver hit max_iter before the KKT gap closed.
    pub converged: bool,
    pub n_iter: usize,
    /// Final dual objective ½αᵀQα + pᵀα; test oracles compare against it.
    pub dual_objective: f64,
    pub params: SvrParams,
    pub feature_codes: Vec<String>,
}

impl SvrModel {
    fn standardize(&self, row: ArrayView1<f64>) -> Vec<f64> {
        row.iter()
            .zip(&self.feature_means)
            .zip(&self.feature_scales)
            .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let z = self.standardize(row);
        let mut acc = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            acc += coef * rbf(&z, sv, self.params.gamma);
        }
        acc
    }
}

fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Fits the SVR dual. Non-convergence within `max_iter` pair updates is not
/// an error; the model comes back with `converged = false`.
pub fn fit_svr_rbf(d: &Dataset, params: &SvrParams) -> Result<FittedModel> {
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
    // Iteration order is row order; canonical sorting makes the fit
    // independent of how the caller permuted the training rows.
    let order = super::canonical_row_order(&d.x.view(), &d.y.view());
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &r in &order {
        xs.push(
            (0..p)
                .map(|j| if scales[j] > 0.0 { (d.x[[r, j]] - means[j]) / scales[j] } else { 0.0 })
                .collect(),
        );
    }
    let ys: Vec<f64> = order.iter().map(|&r| d.y[r]).collect();

    let mut kernel = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(&xs[i], &xs[j], params.gamma);
            kernel[[i, j]] = k;
            kernel[[j, i]] = k;
        }
    }

    let two_n = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let point = |t: usize| if t < n { t } else { t - n };
    let mut alpha = vec![0.0f64; two_n];
    // Gradient of the dual objective; starts at the linear term p.
    let mut grad: Vec<f64> = (0..two_n)
        .map(|t| if t < n { params.epsilon - ys[t] } else { params.epsilon + ys[t - n] })
        .collect();

    let c = params.c;
    let mut n_iter = 0;
    let mut converged = false;
    loop {
        // Maximal violating pair over g_t = −z_t·∇_t.
        let mut up: Option<(usize, f64)> = None;
        let mut down: Option<(usize, f64)> = None;
        for t in 0..two_n {
            let g = -sign(t) * grad[t];
            let can_up = if sign(t) > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let can_down = if sign(t) > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if can_up && up.map_or(true, |(_, best)| g > best) {
                up = Some((t, g));
            }
            if can_down && down.map_or(true, |(_, best)| g < best) {
                down = Some((t, g));
            }
        }
        let ((i, gi), (j, gj)) = match (up, down) {
            (Some(a), Some(b)) => (a, b),
            // Every variable pinned in one direction; nothing can move.
            _ => {
                converged = true;
                break;
            }
        };
        if gi - gj < params.tol {
            converged = true;
            break;
        }
        if n_iter >= params.max_iter {
            break;
        }
        n_iter += 1;

        let (pi, pj) = (point(i), point(j));
        let eta = (kernel[[pi, pi]] + kernel[[pj, pj]] - 2.0 * kernel[[pi, pj]]).max(1e-12);
        // Feasible step: α_i moves by z_i·t, α_j by −z_j·t, preserving zᵀα.
        let mut step = (gi - gj) / eta;
        let headroom_i = if sign(i) > 0.0 { c - alpha[i] } else { alpha[i] };
        let headroom_j = if sign(j) > 0.0 { alpha[j] } else { c - alpha[j] };
        step = step.min(headroom_i).min(headroom_j);
        debug_assert!(step >= 0.0);

        alpha[i] += sign(i) * step;
        alpha[j] -= sign(j) * step;
        for t in 0..two_n {
            let pt = point(t);
            grad[t] += sign(t) * step * (kernel[[pt, pi]] - kernel[[pt, pj]]);
        }
    }

    // b from the KKT conditions: g_t at free variables, else the midpoint of
    // the remaining violation interval.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut max_up = f64::NEG_INFINITY;
    let mut min_down = f64::INFINITY;
    for t in 0..two_n {
        let g = -sign(t) * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += g;
            free_count += 1;
        }
        let can_up = if sign(t) > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        let can_down = if sign(t) > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if can_up {
            max_up = max_up.max(g);
        }
        if can_down {
            min_down = min_down.min(g);
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (max_up + min_down)
    };

    // ½αᵀQα + pᵀα = ½(αᵀ∇ + αᵀp), with ∇ = Qα + p held incrementally.
    let mut dual_objective = 0.0;
    for t in 0..two_n {
        let p_t = if t < n { params.epsilon - ys[t] } else { params.epsilon + ys[t - n] };
        dual_objective += 0.5 * alpha[t] * (grad[t] + p_t);
    }

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for t in 0..n {
        let coef = alpha[t] - alpha[t + n];
        if coef != 0.0 {
            support_vectors.push(xs[t].clone());
            dual_coefficients.push(coef);
        }
    }

    Ok(FittedModel::Svr(SvrModel {
        support_vectors,
        dual_coefficients,
        bias,
        feature_means: means,
        feature_scales: scales,
        converged,
        n_iter,
        dual_objective,
        params: params.clone(),
        feature_codes: d.codes.clone(),
    }))
}
