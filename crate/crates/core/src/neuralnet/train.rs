//! Mini-batch ADAM training for the three network roles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mse_grad, nll_grad, qd_grad, QdConfig};
use super::network::{Head, Network, NetworkSpec, Standardizer, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            epochs: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.epsilon > 0.0)
            || self.batch_size == 0
        {
            return Err(Error::InvalidInput(format!("bad training config {self:?}")));
        }
        Ok(())
    }
}

/// Training targets in the network's standardized output units.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Single output regressed onto `y`.
    Mse(&'a [f64]),
    /// Single pre-softplus output fitted to squared residuals.
    Nll(&'a [f64]),
    /// Two outputs (upper, lower) bracketing `y`.
    Qd(&'a [f64], QdConfig),
}

impl Objective<'_> {
    fn len(&self) -> usize {
        match self {
            Objective::Mse(y) | Objective::Nll(y) | Objective::Qd(y, _) => y.len(),
        }
    }

    fn outputs(&self) -> usize {
        match self {
            Objective::Qd(..) => 2,
            _ => 1,
        }
    }
}

/// Loss over the samples `idx` and its gradient with respect to all
/// parameters. `xs` must already be standardized.
pub fn loss_and_grad(net: &Network, xs: &[Vec<f64>], obj: &Objective, idx: &[usize]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.params.len()];
    let l = accumulate(net, xs, obj, idx, &mut grad);
    (l, grad)
}

fn accumulate(net: &Network, xs: &[Vec<f64>], obj: &Objective, idx: &[usize], grad: &mut [f64]) -> f64 {
    let o = net.spec.output_dim;
    let n = idx.len();
    let mut out = vec![0.0; n * o];
    let mut tapes: Vec<Tape> = Vec::with_capacity(n);
    for (b, &i) in idx.iter().enumerate() {
        let mut t = Tape {
            pre: Vec::new(),
            act: Vec::new(),
        };
        net.forward_raw(&xs[i], &mut out[b * o..(b + 1) * o], Some(&mut t));
        tapes.push(t);
    }
    let mut dout = vec![0.0; n * o];
    let loss = match obj {
        Objective::Mse(y) => {
            let t: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            mse_grad(&out, &t, &mut dout)
        }
        Objective::Nll(r2) => {
            let t: Vec<f64> = idx.iter().map(|&i| r2[i]).collect();
            nll_grad(&out, &t, &mut dout)
        }
        Objective::Qd(y, cfg) => {
            let t: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let up: Vec<f64> = (0..n).map(|b| out[2 * b]).collect();
            let lo: Vec<f64> = (0..n).map(|b| out[2 * b + 1]).collect();
            let (mut du, mut dl) = (vec![0.0; n], vec![0.0; n]);
            let l = qd_grad(&lo, &up, &t, cfg, &mut dl, &mut du);
            for b in 0..n {
                dout[2 * b] = du[b];
                dout[2 * b + 1] = dl[b];
            }
            l
        }
    };
    for (b, &i) in idx.iter().enumerate() {
        net.backward(&xs[i], &tapes[b], &dout[b * o..(b + 1) * o], grad);
    }
    loss
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], c: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g;
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g;
            let mh = self.m[k] / bc1;
            let vh = self.v[k] / bc2;
            params[k] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
        }
    }
}

/// Trains `net` in place on standardized inputs. Sample order is shuffled
/// each epoch from the network seed. Non-finite losses or parameters abort
/// with [`Error::Divergence`].
pub fn train(net: &mut Network, xs: &[Vec<f64>], obj: &Objective, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if xs.len() != obj.len() {
        return Err(Error::Dimension {
            expected: xs.len(),
            got: obj.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if net.spec.output_dim != obj.outputs() {
        return Err(Error::Dimension {
            expected: obj.outputs(),
            got: net.spec.output_dim,
        });
    }
    if let Some(bad) = xs.iter().find(|x| x.len() != net.spec.input_dim) {
        return Err(Error::Dimension {
            expected: net.spec.input_dim,
            got: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(net.spec.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut adam = Adam::new(net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let l = accumulate(net, xs, obj, idx, &mut grad);
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite loss {l} or gradient"),
                });
            }
            adam.step(&mut net.params, &grad, cfg);
            if net.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: "non-finite parameter after update".into(),
                });
            }
            total += l;
            batches += 1;
        }
        net.history.push(total / batches as f64);
    }
    Ok(())
}

fn mean_std(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let s = (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    (m, if s > 1e-12 { s } else { 1.0 })
}

fn check_rows(x: &[Vec<f64>], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension {
            expected: x.len(),
            got: n,
        });
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training input".into()));
    }
    Ok(())
}

/// Point-prediction network fitted with MSE on standardized inputs/targets.
pub fn fit_point(x: &[Vec<f64>], y: &[f64], spec: NetworkSpec, cfg: &TrainConfig) -> Result<Network> {
    check_rows(x, y.len())?;
    let (mean, scale) = mean_std(y);
    let mut net = Network::new(NetworkSpec { output_dim: 1, ..spec }, Head::Point { mean, scale })?;
    net.input_scaler = Standardizer::fit(x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| net.input_scaler.apply(r)).collect();
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / scale).collect();
    train(&mut net, &xs, &Objective::Mse(&ys), cfg)?;
    Ok(net)
}

/// Variance network fitted with the Gaussian NLL of squared residuals `r2`.
/// Residuals are scaled by their mean so the softplus works near unity.
pub fn fit_variance(x: &[Vec<f64>], r2: &[f64], spec: NetworkSpec, cfg: &TrainConfig) -> Result<Network> {
    check_rows(x, r2.len())?;
    if r2.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("squared residuals must be >= 0".into()));
    }
    let m = r2.iter().sum::<f64>() / r2.len() as f64;
    let scale = if m > 0.0 { m } else { 1.0 };
    let mut net = Network::new(NetworkSpec { output_dim: 1, ..spec }, Head::Variance { scale })?;
    net.input_scaler = Standardizer::fit(x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| net.input_scaler.apply(r)).collect();
    let rs: Vec<f64> = r2.iter().map(|v| v / scale).collect();
    train(&mut net, &xs, &Objective::Nll(&rs), cfg)?;
    Ok(net)
}

/// Standardized-unit offset of the initial upper/lower output biases.
pub const QD_INIT_BIAS: f64 = 2.0;

/// Interval network with outputs (upper, lower) trained on the QD loss.
pub fn fit_bounds(x: &[Vec<f64>], y: &[f64], spec: NetworkSpec, cfg: &TrainConfig, qd: &QdConfig) -> Result<Network> {
    check_rows(x, y.len())?;
    qd.validate()?;
    let (mean, scale) = mean_std(y);
    let mut net = Network::new(NetworkSpec { output_dim: 2, ..spec }, Head::Bounds { mean, scale })?;
    net.output_bias_mut().copy_from_slice(&[QD_INIT_BIAS, -QD_INIT_BIAS]);
    net.input_scaler = Standardizer::fit(x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| net.input_scaler.apply(r)).collect();
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / scale).collect();
    train(&mut net, &xs, &Objective::Qd(&ys, *qd), cfg)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn spec(i: usize, o: usize, seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim: i,
            hidden: 20,
            output_dim: o,
            seed,
        }
    }

    fn line_data(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![-1.0 + 2.0 * i as f64 / (n - 1) as f64]).collect();
        let y = x.iter().map(|r| 2.0 * r[0]).collect();
        (x, y)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (x, y) = line_data(50);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let s = spec(1, 1, 7);
        let init = Network::new(s.clone(), Head::Point { mean: 0.0, scale: 1.0 }).unwrap();
        let net = fit_point(&x, &y, s, &cfg).unwrap();
        assert_eq!(net.params, init.params);
        assert_eq!(net.history.len(), 3);
    }

    #[test]
    fn learns_a_line() {
        let (x, y) = line_data(2000);
        let cfg = TrainConfig {
            batch_size: 16,
            ..TrainConfig::default()
        };
        let net = fit_point(&x, &y, spec(1, 1, 3), &cfg).unwrap();
        assert_eq!(net.history.len(), 50);
        // Targets are standardized, so var(y) is 1 in training units.
        assert!(net.history[49] < 1e-3, "loss {}", net.history[49]);
        let mse: f64 =
            x.iter().zip(&y).map(|(r, t)| (net.predict(r).unwrap()[0] - t).powi(2)).sum::<f64>() / x.len() as f64;
        let var_y = 4.0 / 3.0;
        assert!(mse < 1e-3 * var_y, "mse {mse}");
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let c = TrainConfig::default();
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3], &c);
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (x, y) = line_data(300);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let a = fit_point(&x, &y, spec(1, 1, 11), &cfg).unwrap();
        let b = fit_point(&x, &y, spec(1, 1, 11), &cfg).unwrap();
        let c = fit_point(&x, &y, spec(1, 1, 12), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn divergence_reported() {
        let (x, _) = line_data(20);
        let y = vec![f64::NAN; 20];
        let mut net = Network::new(spec(1, 1, 1), Head::Point { mean: 0.0, scale: 1.0 }).unwrap();
        let err = train(&mut net, &x, &Objective::Mse(&y), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, .. }));
    }

    #[test]
    fn variance_net_tracks_heteroscedastic_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        // Residual std grows linearly from 0.1 to 1.1.
        let r2: Vec<f64> = x
            .iter()
            .map(|r| {
                let sd = 0.1 + r[0];
                let e: f64 = rng.sample(rand_distr::StandardNormal);
                (sd * e).powi(2)
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            batch_size: 128,
            epochs: 60,
            ..TrainConfig::default()
        };
        let net = fit_variance(&x, &r2, spec(1, 1, 2), &cfg).unwrap();
        let lo = net.predict(&[0.1]).unwrap()[0];
        let hi = net.predict(&[0.9]).unwrap()[0];
        assert!(lo > 0.0);
        assert!((lo.sqrt() - 0.2).abs() < 0.08, "{lo}");
        assert!((hi.sqrt() - 1.0).abs() < 0.2, "{hi}");
    }

    #[test]
    fn qd_bounds_bracket_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] + 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            batch_size: 256,
            epochs: 300,
            ..TrainConfig::default()
        };
        let net = fit_bounds(&x, &y, spec(1, 2, 4), &cfg, &QdConfig::default()).unwrap();
        let mut inside = 0;
        for (r, t) in x.iter().zip(&y) {
            let b = net.predict(r).unwrap();
            assert!(b[0] >= b[1] - 1e-9);
            if b[1] <= *t && *t <= b[0] {
                inside += 1;
            }
        }
        let picp = inside as f64 / n as f64;
        assert!(picp > 0.88, "picp {picp}");
        let w = net.predict(&[0.0]).unwrap();
        assert!(w[0] - w[1] < 4.0 * 0.2 * 1.96, "width {}", w[0] - w[1]);
    }
}
