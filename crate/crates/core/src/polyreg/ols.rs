//! Ordinary least squares through a column-scaled QR factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number (of the column-scaled regressor matrix) below
/// which a fit is refused.
pub const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X^T X)^-1`, symmetrized.
    pub gram_inverse: DMatrix<f64>,
    pub rcond: f64,
}

/// Minimizes `||y - X c||^2`. `names` labels the columns for diagnostics.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    if p == 0 {
        return Ok(OlsFit {
            coefficients: DVector::zeros(0),
            residuals: y.clone(),
            gram_inverse: DMatrix::zeros(0, 0),
            rcond: 1.0,
        });
    }
    if n < p {
        return Err(Error::InsufficientData(format!("{n} rows for {p} regressors")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite regressor or target".into()));
    }
    let label = |j: usize| names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));

    let scale: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    if let Some(j) = scale.iter().position(|s| *s == 0.0) {
        return Err(Error::Conditioning { column: label(j), rcond: 0.0 });
    }
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = xs.qr();
    let r = qr.r();
    let q = qr.q();

    let sv = r.singular_values();
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), s| (a.max(*s), b.min(*s)));
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(rcond >= RCOND_MIN) {
        let worst = (0..p)
            .min_by(|&a, &b| r[(a, a)].abs().total_cmp(&r[(b, b)].abs()))
            .unwrap_or(0);
        return Err(Error::Conditioning { column: label(worst), rcond });
    }

    let qty = q.transpose() * y;
    let cs = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Conditioning { column: label(p - 1), rcond })?;
    let coefficients = DVector::from_iterator(p, cs.iter().zip(&scale).map(|(c, s)| c / s));
    let residuals = y - x * &coefficients;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Conditioning { column: label(p - 1), rcond })?;
    let mut g = &r_inv * r_inv.transpose();
    for i in 0..p {
        for j in 0..p {
            g[(i, j)] /= scale[i] * scale[j];
        }
    }
    let gram_inverse = (&g + g.transpose()) * 0.5;

    Ok(OlsFit {
        coefficients,
        residuals,
        gram_inverse,
        rcond,
    })
}

/// Unbiased residual variance with two degrees of freedom removed:
/// `sum(e^2) / (N - 2)`.
pub fn residual_variance(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n <= 2 {
        return Err(Error::InsufficientData(format!(
            "residual variance needs more than 2 samples, got {n}"
        )));
    }
    Ok(residuals.iter().map(|e| e * e).sum::<f64>() / (n as f64 - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn exact_linear_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let y = &x * &c;
        let fit = ols_fit(&x, &y, &names(3)).unwrap();
        assert!(fit.residuals.amax() < 1e-9 * y.amax());
        assert!((fit.coefficients - c).amax() < 1e-12);
    }

    #[test]
    fn ones_column_gives_mean() {
        let y = DVector::from_vec(vec![1.0, 4.0, -2.0, 7.5]);
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = ols_fit(&x, &y, &names(1)).unwrap();
        assert!((fit.coefficients[0] - y.mean()).abs() < 1e-14);
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(200, 5, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
        let y = DVector::from_fn(200, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = ols_fit(&x, &y, &names(5)).unwrap();
        // Oracle: Cholesky solve of X^T X c = X^T y.
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let chol = xtx.clone().cholesky().unwrap();
        let c = chol.solve(&xty);
        for j in 0..5 {
            assert!((fit.coefficients[j] - c[j]).abs() <= 1e-8 * c[j].abs().max(1e-3));
        }
        let inv = chol.inverse();
        assert!((fit.gram_inverse.clone() - inv.clone()).amax() <= 1e-8 * inv.amax());
        assert!((fit.gram_inverse.clone() - fit.gram_inverse.transpose()).amax() == 0.0);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
        let dup = x.column(0) * 2.0 - x.column(1);
        x.set_column(2, &dup);
        let y = DVector::from_element(40, 1.0);
        match ols_fit(&x, &y, &names(3)) {
            Err(Error::Conditioning { column, .. }) => assert_eq!(column, "x2"),
            other => panic!("expected conditioning error, got {other:?}"),
        }
        let z = DMatrix::zeros(10, 1);
        assert!(matches!(
            ols_fit(&z, &DVector::zeros(10), &names(1)),
            Err(Error::Conditioning { .. })
        ));
    }

    #[test]
    fn residual_variance_examples() {
        assert_eq!(residual_variance(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(residual_variance(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert!(matches!(residual_variance(&[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn residual_variance_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sigma = 0.7;
        let e: Vec<f64> = (0..10_000).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let s2 = residual_variance(&e).unwrap();
        assert!((s2 / (sigma * sigma) - 1.0).abs() < 0.05);
    }
}
