//! Training losses with their analytic gradients.
//!
//! Each `*_grad` function returns the loss and writes `d loss / d output`
//! into the provided slices, which the network then backpropagates.

use serde::{Deserialize, Serialize};

use super::network::{sigmoid, softplus, VARIANCE_FLOOR};
use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    Ok(())
}

/// Mean squared error.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    same_len(pred.len(), target.len())?;
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &[f64], target: &[f64], dpred: &mut [f64]) -> f64 {
    let n = pred.len() as f64;
    let mut l = 0.0;
    for ((p, t), g) in pred.iter().zip(target).zip(dpred.iter_mut()) {
        let e = p - t;
        l += e * e;
        *g = 2.0 * e / n;
    }
    l / n
}

/// Gaussian negative log-likelihood of squared residuals `r2` under variances
/// `sigma2`: `0.5 * sum(ln sigma2 + r2 / sigma2)`.
pub fn loss_bootstrap_nll(sigma2: &[f64], r2: &[f64]) -> Result<f64> {
    same_len(sigma2.len(), r2.len())?;
    if sigma2.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("variances must be positive".into()));
    }
    Ok(0.5 * sigma2.iter().zip(r2).map(|(s, r)| s.ln() + r / s).sum::<f64>())
}

/// NLL as a function of the pre-softplus output `z`, with
/// `sigma2 = softplus(z) + 1e-8` in the network's standardized units.
pub fn nll_grad(z: &[f64], r2: &[f64], dz: &mut [f64]) -> f64 {
    let mut l = 0.0;
    for ((zi, r), g) in z.iter().zip(r2).zip(dz.iter_mut()) {
        let s = softplus(*zi) + VARIANCE_FLOOR;
        l += 0.5 * (s.ln() + r / s);
        *g = 0.5 * (1.0 / s - r / (s * s)) * sigmoid(*zi);
    }
    l
}

/// Hyperparameters of the quality-driven interval loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdConfig {
    /// Penalty weight on coverage shortfall.
    pub lambda: f64,
    /// Sigmoid sharpness of the soft coverage indicator.
    pub softness: f64,
    /// Miscoverage level; target coverage is `1 - alpha`.
    pub alpha: f64,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            lambda: 15.0,
            softness: 160.0,
            alpha: 0.05,
        }
    }
}

impl QdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.lambda >= 0.0) || !(self.softness > 0.0) {
            return Err(Error::InvalidInput(format!("bad QD config {self:?}")));
        }
        Ok(())
    }
}

/// Sigmoid-smoothed coverage `mean(S(s(y - L)) * S(s(U - y)))`.
pub fn picp_soft(lower: &[f64], upper: &[f64], y: &[f64], s: f64) -> f64 {
    let n = y.len() as f64;
    (0..y.len())
        .map(|i| sigmoid(s * (y[i] - lower[i])) * sigmoid(s * (upper[i] - y[i])))
        .sum::<f64>()
        / n
}

/// Fraction of `y` inside the closed intervals.
pub fn picp_hard(lower: &[f64], upper: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    (0..y.len()).filter(|&i| lower[i] <= y[i] && y[i] <= upper[i]).count() as f64 / n
}

/// Quality-driven loss: captured mean width plus a squared hinge on the
/// shortfall of soft coverage below `1 - alpha`, weighted by `N * lambda`.
pub fn loss_quality_driven(lower: &[f64], upper: &[f64], y: &[f64], cfg: &QdConfig) -> Result<f64> {
    same_len(lower.len(), upper.len())?;
    same_len(lower.len(), y.len())?;
    let n = y.len();
    let (mut du, mut dl) = (vec![0.0; n], vec![0.0; n]);
    Ok(qd_grad(lower, upper, y, cfg, &mut dl, &mut du))
}

pub fn qd_grad(lower: &[f64], upper: &[f64], y: &[f64], cfg: &QdConfig, dl: &mut [f64], du: &mut [f64]) -> f64 {
    let n = y.len() as f64;
    let s = cfg.softness;
    let mut captured = 0.0;
    let mut width = 0.0;
    let mut picp_s = 0.0;
    for i in 0..y.len() {
        if lower[i] <= y[i] && y[i] <= upper[i] {
            captured += 1.0;
            width += upper[i] - lower[i];
        }
        picp_s += sigmoid(s * (y[i] - lower[i])) * sigmoid(s * (upper[i] - y[i]));
    }
    picp_s /= n;
    // With nothing captured the width term is defined as zero.
    let mpiw_c = if captured > 0.0 { width / captured } else { 0.0 };
    let short = ((1.0 - cfg.alpha) - picp_s).max(0.0);
    let loss = mpiw_c + n * cfg.lambda * short * short;

    let dpen = -2.0 * n * cfg.lambda * short;
    for i in 0..y.len() {
        let k = if captured > 0.0 && lower[i] <= y[i] && y[i] <= upper[i] {
            1.0 / captured
        } else {
            0.0
        };
        let a = sigmoid(s * (y[i] - lower[i]));
        let b = sigmoid(s * (upper[i] - y[i]));
        du[i] = k + dpen * a * b * (1.0 - b) * s / n;
        dl[i] = -k - dpen * b * a * (1.0 - a) * s / n;
    }
    loss
}
