//! Fitted polynomial models, prediction and analytic prediction intervals.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::term::Term;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::sci;
use crate::stats::t_critical;

/// One entry of the stepwise trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub term: Term,
    #[serde(with = "sci::scalar")]
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Fixed,
    Added,
    Removed,
}

/// Training-set quantities needed for the analytic interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    /// `(X^T X)^-1`, row-major.
    #[serde(with = "sci::matrix")]
    pub gram_inverse: Vec<Vec<f64>>,
    #[serde(with = "sci::scalar")]
    pub sigma_e2: f64,
    pub n_train: usize,
    #[serde(with = "sci::scalar")]
    pub r2: f64,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub target: String,
    /// Fixed terms first, then selected terms in order of addition.
    pub terms: Vec<Term>,
    pub n_fixed: usize,
    #[serde(with = "sci::vec")]
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitStatistics>,
}

/// Analytic interval at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyInterval {
    pub y_hat: f64,
    pub lower: f64,
    pub upper: f64,
    /// Total standard deviation `sigma_0`.
    pub sigma0: f64,
    /// `x0 (X^T X)^-1 x0^T`, before scaling by `sigma_e^2`.
    pub leverage: f64,
}

impl PolyInterval {
    /// The model-uncertainty part of the variance, `sigma_e^2 * leverage`.
    pub fn model_term(&self, sigma_e2: f64) -> f64 {
        sigma_e2 * self.leverage
    }
}

impl PolynomialModel {
    /// A model with given coefficients and no training statistics, such as a
    /// ground-truth model.
    pub fn fixed(target: &str, terms: Vec<Term>, coefficients: Vec<f64>) -> Result<Self> {
        if terms.len() != coefficients.len() {
            return Err(Error::Dimension {
                expected: terms.len(),
                got: coefficients.len(),
            });
        }
        let n_fixed = terms.len();
        Ok(PolynomialModel {
            target: target.to_string(),
            terms,
            n_fixed,
            coefficients,
            fit: None,
        })
    }

    pub fn regressor_row(&self, x: &FeatureVector) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.eval(x))
            .sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum()
    }

    pub fn stats(&self) -> Result<&FitStatistics> {
        self.fit
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("model '{}' carries no fit statistics", self.target)))
    }

    /// `x0 G x0^T` for the stored Gram inverse `G`.
    pub fn leverage(&self, row: &[f64]) -> Result<f64> {
        let g = &self.stats()?.gram_inverse;
        if row.len() != g.len() {
            return Err(Error::Dimension {
                expected: g.len(),
                got: row.len(),
            });
        }
        let mut acc = 0.0;
        for (i, gi) in g.iter().enumerate() {
            let s: f64 = gi.iter().zip(row).map(|(a, b)| a * b).sum();
            acc += row[i] * s;
        }
        Ok(acc.max(0.0))
    }

    /// Interval `y_hat -/+ t * sigma0` with
    /// `sigma0^2 = sigma_e^2 (1 + x0 G x0^T)`, t on `N_t - 2` degrees of
    /// freedom, and a per-sample observation count `n` (normally 1).
    pub fn poly_pi(&self, row: &[f64], alpha: f64, n: usize) -> Result<PolyInterval> {
        let st = self.stats()?;
        let t = t_critical(alpha, st.n_train as f64 - 2.0)?;
        let leverage = self.leverage(row)?;
        let sigma0 = (st.sigma_e2 * (1.0 + leverage)).sqrt();
        let half = t * sigma0 / (n.max(1) as f64).sqrt();
        let y_hat = self.predict_row(row);
        Ok(PolyInterval {
            y_hat,
            lower: y_hat - half,
            upper: y_hat + half,
            sigma0,
            leverage,
        })
    }

    pub fn interval_at(&self, x: &FeatureVector, alpha: f64) -> Result<PolyInterval> {
        self.poly_pi(&self.regressor_row(x), alpha, 1)
    }

    pub fn design_matrix(&self, rows: &[FeatureVector]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.terms.len(), |i, j| self.terms[j].eval(&rows[i]))
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut m = self.clone();
        for c in &mut m.coefficients {
            *c *= k;
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PolynomialModel = serde_json::from_str(s)?;
        if m.terms.len() != m.coefficients.len() {
            return Err(Error::Schema(format!(
                "model '{}': {} terms but {} coefficients",
                m.target,
                m.terms.len(),
                m.coefficients.len()
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub(crate) fn gram_to_rows(g: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect()
}
