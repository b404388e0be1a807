//! Forward stepwise regression with backward elimination.
//!
//! Each pass orthogonalizes every remaining candidate against the columns
//! already in the model and picks the one most correlated with the current
//! residual. It enters if its partial F exceeds `f_in`; afterwards any
//! selected (non-fixed) term whose partial F has dropped below `f_out` is
//! removed again.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{gram_to_rows, FitStatistics, PolynomialModel, StepAction, StepRecord};
use super::ols::{ols_fit, residual_variance};
use super::pool::CandidatePool;
use super::term::Term;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepwiseCriteria {
    pub f_in: f64,
    pub f_out: f64,
    /// Maximum number of selected (non-fixed) terms.
    pub max_terms: usize,
    /// Stop once R^2 reaches this value.
    pub r2_stop: f64,
}

impl Default for StepwiseCriteria {
    fn default() -> Self {
        StepwiseCriteria {
            f_in: 4.0,
            f_out: 3.9,
            max_terms: 20,
            r2_stop: 1.0 - 1e-12,
        }
    }
}

/// Candidates whose orthogonal remainder keeps less than this fraction of
/// their squared norm are treated as already in the model span.
const COLLINEAR_TOL: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Projects `v` onto the orthogonal complement of `basis` (two passes of
/// modified Gram-Schmidt).
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(v, -c, q);
        }
    }
}

struct State<'a> {
    y: &'a [f64],
    fixed_cols: &'a [Vec<f64>],
    cand_cols: &'a [Vec<f64>],
    cand_norm2: Vec<f64>,
    selected: Vec<usize>,
    basis: Vec<Vec<f64>>,
    perp: Vec<Vec<f64>>,
    residual: Vec<f64>,
}

impl<'a> State<'a> {
    fn rebuild(&mut self) {
        self.basis.clear();
        let cols: Vec<&Vec<f64>> = self
            .fixed_cols
            .iter()
            .chain(self.selected.iter().map(|&k| &self.cand_cols[k]))
            .collect();
        for c in cols {
            self.push_basis(c.clone());
        }
        self.perp = self.cand_cols.to_vec();
        for p in &mut self.perp {
            project_out(p, &self.basis);
        }
        self.residual = self.y.to_vec();
        project_out(&mut self.residual, &self.basis);
    }

    fn push_basis(&mut self, mut v: Vec<f64>) -> bool {
        let n0 = dot(&v, &v);
        project_out(&mut v, &self.basis);
        let n = dot(&v, &v);
        if n0 == 0.0 || n <= COLLINEAR_TOL * n0 {
            return false;
        }
        let inv = 1.0 / n.sqrt();
        v.iter_mut().for_each(|x| *x *= inv);
        self.basis.push(v);
        true
    }

    fn add(&mut self, k: usize) {
        self.selected.push(k);
        let q = {
            let mut v = self.perp[k].clone();
            project_out(&mut v, &self.basis);
            let n = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        for p in &mut self.perp {
            let c = dot(&q, p);
            axpy(p, -c, &q);
        }
        let c = dot(&q, &self.residual);
        axpy(&mut self.residual, -c, &q);
        self.basis.push(q);
    }

    fn sse(&self) -> f64 {
        dot(&self.residual, &self.residual)
    }
}

fn columns(terms: &[Term], rows: &[FeatureVector]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| rows.iter().map(|x| t.eval(x)).collect())
        .collect()
}

/// Identifies a model for `y` from `pool` on the given feature rows.
pub fn stepwise_fit(
    target: &str,
    pool: &CandidatePool,
    rows: &[FeatureVector],
    y: &[f64],
    criteria: &StepwiseCriteria,
) -> Result<PolynomialModel> {
    let n = rows.len();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if n <= pool.fixed.len() + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} samples for {} fixed terms",
            pool.fixed.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite target".into()));
    }

    let fixed_cols = columns(&pool.fixed, rows);
    let cand_cols = columns(&pool.candidates, rows);
    let cand_norm2: Vec<f64> = cand_cols.iter().map(|c| dot(c, c)).collect();

    let sst = if pool.has_bias() {
        let mean = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        dot(y, y)
    };
    let r2_of = |sse: f64| if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };

    let mut st = State {
        y,
        fixed_cols: &fixed_cols,
        cand_cols: &cand_cols,
        cand_norm2,
        selected: Vec::new(),
        basis: Vec::new(),
        perp: Vec::new(),
        residual: Vec::new(),
    };
    st.rebuild();

    let mut steps: Vec<StepRecord> = Vec::new();
    let fixed_r2 = r2_of(st.sse());
    for t in &pool.fixed {
        steps.push(StepRecord {
            action: StepAction::Fixed,
            term: t.clone(),
            r2: fixed_r2,
        });
    }

    let max_passes = 4 * criteria.max_terms + pool.candidates.len() + 4;
    for _ in 0..max_passes {
        if st.selected.len() >= criteria.max_terms || r2_of(st.sse()) >= criteria.r2_stop {
            break;
        }
        let sse = st.sse();
        let rr = sse;
        if rr <= 0.0 {
            break;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for (k, p) in st.perp.iter().enumerate() {
            if st.selected.contains(&k) {
                continue;
            }
            let pp = dot(p, p);
            if pp <= COLLINEAR_TOL * st.cand_norm2[k] || pp == 0.0 {
                continue;
            }
            let pr = dot(p, &st.residual);
            let rho2 = pr * pr / (pp * rr);
            if best.is_none_or(|(_, b, _)| rho2 > b) {
                best = Some((k, rho2, pr * pr / pp));
            }
        }
        let Some((k, _, gain)) = best else { break };
        let p_new = fixed_cols.len() + st.selected.len() + 1;
        if n <= p_new {
            break;
        }
        let sse_new = (sse - gain).max(0.0);
        let f = if sse_new > 0.0 {
            gain / (sse_new / (n - p_new) as f64)
        } else {
            f64::INFINITY
        };
        if !(f > criteria.f_in) {
            break;
        }
        st.add(k);
        steps.push(StepRecord {
            action: StepAction::Added,
            term: pool.candidates[k].clone(),
            r2: r2_of(st.sse()),
        });

        // Backward elimination, one term at a time.
        loop {
            if st.selected.is_empty() {
                break;
            }
            let (x, names) = design(&fixed_cols, &cand_cols, &st.selected, pool);
            let fit = ols_fit(&x, &DVector::from_column_slice(y), &names)?;
            let p = x.ncols();
            let s2 = fit.residuals.norm_squared() / (n - p) as f64;
            if !(s2 > 0.0) {
                break;
            }
            let nf = fixed_cols.len();
            let (worst, f_min) = (0..st.selected.len())
                .map(|i| {
                    let j = nf + i;
                    let f = fit.coefficients[j].powi(2) / (s2 * fit.gram_inverse[(j, j)]);
                    (i, f)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty selection");
            if f_min >= criteria.f_out {
                break;
            }
            let k = st.selected.remove(worst);
            st.rebuild();
            steps.push(StepRecord {
                action: StepAction::Removed,
                term: pool.candidates[k].clone(),
                r2: r2_of(st.sse()),
            });
        }
    }

    let (x, names) = design(&fixed_cols, &cand_cols, &st.selected, pool);
    let fit = ols_fit(&x, &DVector::from_column_slice(y), &names)?;
    let residuals: Vec<f64> = fit.residuals.iter().copied().collect();
    let sigma_e2 = residual_variance(&residuals)?;
    let r2 = r2_of(fit.residuals.norm_squared());

    let mut terms = pool.fixed.clone();
    terms.extend(st.selected.iter().map(|&k| pool.candidates[k].clone()));
    Ok(PolynomialModel {
        target: target.to_string(),
        terms,
        n_fixed: pool.fixed.len(),
        coefficients: fit.coefficients.iter().copied().collect(),
        fit: Some(FitStatistics {
            gram_inverse: gram_to_rows(&fit.gram_inverse),
            sigma_e2,
            n_train: n,
            r2,
            steps,
        }),
    })
}

fn design(
    fixed: &[Vec<f64>],
    cands: &[Vec<f64>],
    selected: &[usize],
    pool: &CandidatePool,
) -> (DMatrix<f64>, Vec<String>) {
    let cols: Vec<&Vec<f64>> = fixed.iter().chain(selected.iter().map(|&k| &cands[k])).collect();
    let n = cols.first().map_or(0, |c| c.len());
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let names = pool
        .fixed
        .iter()
        .chain(selected.iter().map(|&k| &pool.candidates[k]))
        .map(Term::canonical)
        .collect();
    (x, names)
}
