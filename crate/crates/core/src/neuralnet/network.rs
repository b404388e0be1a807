//! Single-hidden-layer ReLU network with a linear output layer.
//!
//! Parameters live in one flat vector laid out as `[W1, b1, W2, b2]`, with
//! `W1` (hidden x input) and `W2` (output x hidden) row-major. Inputs are
//! standardized with training statistics; the output head maps raw network
//! outputs back to target units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sci;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.output_dim == 0 {
            return Err(Error::InvalidInput(format!("network dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.input_dim + self.hidden + self.output_dim * self.hidden + self.output_dim
    }
}

/// Per-column affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "sci::vec")]
    pub mean: Vec<f64>,
    #[serde(with = "sci::vec")]
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Column statistics of `rows`; constant columns get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// How raw outputs map to target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// `y = mean + scale * z`.
    Point {
        #[serde(with = "sci::scalar")]
        mean: f64,
        #[serde(with = "sci::scalar")]
        scale: f64,
    },
    /// `sigma^2 = scale * (softplus(z) + 1e-8)`.
    Variance {
        #[serde(with = "sci::scalar")]
        scale: f64,
    },
    /// Output 0 is the upper bound and output 1 the lower bound, each
    /// `mean + scale * z`.
    Bounds {
        #[serde(with = "sci::scalar")]
        mean: f64,
        #[serde(with = "sci::scalar")]
        scale: f64,
    },
}

pub const VARIANCE_FLOOR: f64 = 1e-8;

pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    #[serde(with = "sci::vec")]
    pub params: Vec<f64>,
    pub input_scaler: Standardizer,
    pub head: Head,
    /// Mean training loss per epoch.
    #[serde(with = "sci::vec")]
    pub history: Vec<f64>,
}

/// Hidden activations kept for the backward pass.
pub struct Tape {
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
}

impl Network {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn new(spec: NetworkSpec, head: Head) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = vec![0.0; spec.n_params()];
        let (i, h, o) = (spec.input_dim, spec.hidden, spec.output_dim);
        let b1 = (6.0 / i as f64).sqrt();
        for w in &mut params[..h * i] {
            *w = rng.random_range(-b1..b1);
        }
        let b2 = (6.0 / h as f64).sqrt();
        let off = h * i + h;
        for w in &mut params[off..off + o * h] {
            *w = rng.random_range(-b2..b2);
        }
        Ok(Network {
            input_scaler: Standardizer::identity(i),
            spec,
            params,
            head,
            history: Vec::new(),
        })
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden, self.spec.output_dim);
        let b1 = h * i;
        let w2 = b1 + h;
        let b2 = w2 + o * h;
        (b1, w2, b2)
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let (_, _, b2) = self.offsets();
        &mut self.params[b2..]
    }

    /// Raw forward pass on an already standardized input.
    pub fn forward_raw(&self, x: &[f64], out: &mut [f64], tape: Option<&mut Tape>) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden, self.spec.output_dim);
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        let mut pre = [0.0f64; 256];
        let mut act = [0.0f64; 256];
        let mut pre_v;
        let mut act_v;
        let (pre, act): (&mut [f64], &mut [f64]) = if h <= 256 {
            (&mut pre[..h], &mut act[..h])
        } else {
            pre_v = vec![0.0; h];
            act_v = vec![0.0; h];
            (&mut pre_v[..], &mut act_v[..])
        };
        for j in 0..h {
            let row = &p[j * i..(j + 1) * i];
            let mut z = p[ob1 + j];
            for (w, xv) in row.iter().zip(x) {
                z += w * xv;
            }
            pre[j] = z;
            act[j] = z.max(0.0);
        }
        for k in 0..o {
            let row = &p[ow2 + k * h..ow2 + (k + 1) * h];
            let mut z = p[ob2 + k];
            for (w, a) in row.iter().zip(act.iter()) {
                z += w * a;
            }
            out[k] = z;
        }
        if let Some(t) = tape {
            t.pre.clear();
            t.pre.extend_from_slice(pre);
            t.act.clear();
            t.act.extend_from_slice(act);
        }
    }

    /// Accumulates into `grad` the parameter gradient for one sample given
    /// `d loss / d out`.
    pub fn backward(&self, x: &[f64], tape: &Tape, dout: &[f64], grad: &mut [f64]) {
        let (i, h, o) = (self.spec.input_dim, self.spec.hidden, self.spec.output_dim);
        let (ob1, ow2, ob2) = self.offsets();
        let p = &self.params;
        for k in 0..o {
            let g = dout[k];
            if g == 0.0 {
                continue;
            }
            grad[ob2 + k] += g;
            let row = &mut grad[ow2 + k * h..ow2 + (k + 1) * h];
            for (gw, a) in row.iter_mut().zip(&tape.act) {
                *gw += g * a;
            }
        }
        for j in 0..h {
            if tape.pre[j] <= 0.0 {
                continue;
            }
            let mut dz = 0.0;
            for k in 0..o {
                dz += dout[k] * p[ow2 + k * h + j];
            }
            if dz == 0.0 {
                continue;
            }
            grad[ob1 + j] += dz;
            let row = &mut grad[j * i..(j + 1) * i];
            for (gw, xv) in row.iter_mut().zip(x) {
                *gw += dz * xv;
            }
        }
    }

    /// Forward pass on raw (unstandardized) input, returning raw outputs.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Dimension {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        let xs = self.input_scaler.apply(x);
        let mut out = vec![0.0; self.spec.output_dim];
        self.forward_raw(&xs, &mut out, None);
        Ok(out)
    }

    /// Forward pass mapped through the head into target units.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.forward(x)?;
        Ok(match &self.head {
            Head::Point { mean, scale } | Head::Bounds { mean, scale } => z.iter().map(|v| mean + scale * v).collect(),
            Head::Variance { scale } => z.iter().map(|v| scale * (softplus(*v) + VARIANCE_FLOOR)).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let n: Network = serde_json::from_str(s)?;
        n.spec.validate()?;
        if n.params.len() != n.spec.n_params() {
            return Err(Error::Schema(format!(
                "network has {} parameters, spec needs {}",
                n.params.len(),
                n.spec.n_params()
            )));
        }
        Ok(n)
    }
}
