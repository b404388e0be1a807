//! Small feed-forward networks trained from scratch.

mod loss;
mod network;
mod train;

pub use loss::{
    loss_bootstrap_nll, loss_mse, loss_quality_driven, mse_grad, nll_grad, picp_hard, picp_soft, qd_grad, QdConfig,
};
pub use network::{sigmoid, softplus, Head, Network, NetworkSpec, Standardizer, Tape, VARIANCE_FLOOR};
pub use train::{fit_bounds, fit_point, fit_variance, loss_and_grad, train, Objective, TrainConfig, QD_INIT_BIAS};

#[cfg(test)]
mod gradcheck {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Relative error of the analytic gradient against central differences.
    /// Returns `None` when a ReLU or coverage kink lies too close to the
    /// evaluation point, or the gradient vanishes, so a finite difference
    /// would not be meaningful.
    fn check(net: &Network, xs: &[Vec<f64>], obj: &Objective, idx: &[usize]) -> Option<f64> {
        let mut out = vec![0.0; net.spec.output_dim];
        for &i in idx {
            let mut t = Tape {
                pre: vec![],
                act: vec![],
            };
            net.forward_raw(&xs[i], &mut out, Some(&mut t));
            if t.pre.iter().any(|p| p.abs() < 1e-3) {
                return None;
            }
            if let Objective::Qd(y, _) = obj {
                if out.iter().any(|b| (b - y[i]).abs() < 0.02) {
                    return None;
                }
            }
        }
        let (_, g) = loss_and_grad(net, xs, obj, idx);
        let h = 1e-5;
        let mut p = net.clone();
        let mut fd = vec![0.0; g.len()];
        for k in 0..g.len() {
            let base = p.params[k];
            p.params[k] = base + h;
            let (lp, _) = loss_and_grad(&p, xs, obj, idx);
            p.params[k] = base - h;
            let (lm, _) = loss_and_grad(&p, xs, obj, idx);
            p.params[k] = base;
            fd[k] = (lp - lm) / (2.0 * h);
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        // Saturated soft-coverage terms leave no signal above round-off.
        if norm < 1e-6 {
            return None;
        }
        Some(diff / norm)
    }

    fn run(kind: u8) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + kind as u64);
        let mut checked = 0;
        let mut attempt = 0;
        while checked < 20 {
            attempt += 1;
            assert!(attempt < 400, "too many rejected batches");
            let out = if kind == 2 { 2 } else { 1 };
            let spec = NetworkSpec {
                input_dim: 3,
                hidden: 6,
                output_dim: out,
                seed: rng.random(),
            };
            let mut net = Network::new(spec, Head::Point { mean: 0.0, scale: 1.0 }).unwrap();
            if kind == 2 {
                net.output_bias_mut().copy_from_slice(&[0.5, -0.5]);
            }
            let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r2: Vec<f64> = y.iter().map(|v| v * v).collect();
            let obj = match kind {
                0 => Objective::Mse(&y),
                1 => Objective::Nll(&r2),
                _ => Objective::Qd(&y, QdConfig::default()),
            };
            let idx: Vec<usize> = (0..5).collect();
            if let Some(rel) = check(&net, &xs, &obj, &idx) {
                assert!(rel < 1e-4, "kind {kind}: relative error {rel}");
                checked += 1;
            }
        }
        checked
    }

    #[test]
    fn mse_gradient() {
        assert_eq!(run(0), 20);
    }

    #[test]
    fn nll_gradient() {
        assert_eq!(run(1), 20);
    }

    #[test]
    fn qd_gradient() {
        assert_eq!(run(2), 20);
    }
}
