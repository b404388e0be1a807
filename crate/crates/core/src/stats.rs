//! Small statistical helpers.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Two-sided critical value `t_{dof}^{1 - alpha/2}`.
pub fn t_critical(alpha: f64, dof: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(dof > 0.0) {
        return Err(Error::InsufficientData(format!("t-quantile needs positive dof, got {dof}")));
    }
    let p = 1.0 - alpha / 2.0;
    let q = if dof > 1e6 {
        Normal::standard().inverse_cdf(p)
    } else {
        StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .inverse_cdf(p)
    };
    Ok(q)
}

/// Neumaier-compensated sum, used where reduction order must not matter.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
