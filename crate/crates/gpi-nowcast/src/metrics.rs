//! Accuracy indicators for prediction series: Pearson correlation, root mean
//! squared error, mean absolute percentage error, and the signed percentage
//! error behind overshoot/undershoot readings.
//!
//! Argument convention throughout: `y` is the observed series, `x` the
//! predicted one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The indicator triple for one evaluated series pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Number of evaluated pairs.
    pub n: usize,
    /// Absent when either series is constant (correlation undefined).
    pub pearson: Option<f64>,
    pub rmse: f64,
    /// In percent.
    pub mape: f64,
}

/// Computes all three indicators at once.
pub fn report(y: &[f64], x: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport { n: y.len(), pearson: pearson(y, x)?, rmse: rmse(y, x)?, mape: mape(y, x)? })
}

fn check_lengths(y: &[f64], x: &[f64], min: usize, what: &str) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::data(format!("{what}: length mismatch ({} vs {})", y.len(), x.len())));
    }
    if y.len() < min {
        return Err(Error::data(format!("{what}: needs at least {min} pairs, got {}", y.len())));
    }
    Ok(())
}

/// Sample linear correlation coefficient.
///
/// Returns `None` when either series is constant, where the ratio is 0/0;
/// callers must distinguish "no measurable linear signal" from a zero.
pub fn pearson(y: &[f64], x: &[f64]) -> Result<Option<f64>> {
    check_lengths(y, x, 2, "pearson")?;
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    let mut sxx = 0.0;
    for (yi, xi) in y.iter().zip(x) {
        let dy = yi - my;
        let dx = xi - mx;
        sxy += dx * dy;
        syy += dy * dy;
        sxx += dx * dx;
    }
    if syy == 0.0 || sxx == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (syy.sqrt() * sxx.sqrt())))
}

/// Root mean squared error. Symmetric in its arguments.
pub fn rmse(y: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(y, x, 1, "rmse")?;
    let sse: f64 = y.iter().zip(x).map(|(yi, xi)| (yi - xi) * (yi - xi)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent. Every observed value must be
/// nonzero.
pub fn mape(y: &[f64], x: &[f64]) -> Result<f64> {
    check_lengths(y, x, 1, "mape")?;
    let mut acc = 0.0;
    for (yi, xi) in y.iter().zip(x) {
        if *yi == 0.0 {
            return Err(Error::data("mape: observed value is zero"));
        }
        acc += ((yi - xi) / yi).abs();
    }
    Ok(100.0 * acc / y.len() as f64)
}

/// Signed percentage error of one prediction: positive means the prediction
/// overshoots the observed value, negative means it undershoots.
pub fn percentage_error(y_t: f64, x_t: f64) -> Result<f64> {
    if y_t == 0.0 {
        return Err(Error::data("percentage_error: observed value is zero"));
    }
    Ok(100.0 * (x_t - y_t) / y_t)
}
