//! Prediction intervals from network ensembles.
//!
//! Bootstrap ensembles give a mean prediction, a model-uncertainty variance
//! from member spread, and a measurement-noise variance from a separate
//! network trained on residuals of held-out data. Quality-driven ensembles
//! emit bounds directly. Polynomial intervals live in [`crate::polyreg`].

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::neuralnet::{fit_bounds, fit_point, fit_variance, Network, NetworkSpec, QdConfig, TrainConfig};
use crate::polyreg::{PolyInterval, Term};
use crate::stats::t_critical;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub y_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub sigma2_model: Option<f64>,
    pub sigma2_noise: Option<f64>,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

impl From<PolyInterval> for PredictionInterval {
    fn from(p: PolyInterval) -> Self {
        let total = p.sigma0 * p.sigma0;
        let noise = total / (1.0 + p.leverage);
        PredictionInterval {
            y_hat: p.y_hat,
            lower: p.lower,
            upper: p.upper,
            sigma2_model: Some(total - noise),
            sigma2_noise: Some(noise),
        }
    }
}

/// ANN input vector built from terms such as `mu_x` or `abs(mu_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnInputs(pub Vec<Term>);

impl AnnInputs {
    pub fn parse<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSpec("ANN input list is empty".into()));
        }
        Ok(AnnInputs(names.iter().map(|n| Term::parse(n.as_ref())).collect::<Result<_>>()?))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn row(&self, x: &FeatureVector) -> Vec<f64> {
        self.0.iter().map(|t| t.eval(x)).collect()
    }

    pub fn rows(&self, xs: &[FeatureVector]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.row(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Point,
    QdBounds,
}

/// How member bounds of a QD ensemble combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of member lower and upper bounds.
    #[default]
    Mean,
    /// Mean bound widened by `z_{1-alpha/2}` times the member spread of that
    /// bound.
    Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: usize,
    pub variance_hidden: usize,
    /// Fraction of training data reserved for the variance network.
    pub heldout_fraction: f64,
    /// Bootstrap resample size as a fraction of the member training pool.
    pub resample_fraction: f64,
    /// Whether QD members also train on bootstrap resamples.
    pub qd_resample: bool,
    pub train: TrainConfig,
    pub qd: QdConfig,
    pub aggregation: Aggregation,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 10,
            hidden: 20,
            variance_hidden: 25,
            heldout_fraction: 0.2,
            resample_fraction: 1.0,
            qd_resample: true,
            train: TrainConfig::default(),
            qd: QdConfig::default(),
            aggregation: Aggregation::Mean,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 || self.hidden == 0 || self.variance_hidden == 0 {
            return Err(Error::InvalidInput("ensemble sizes must be positive".into()));
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::InvalidInput(format!("heldout_fraction {} not in (0,1)", self.heldout_fraction)));
        }
        if !(self.resample_fraction > 0.0) {
            return Err(Error::InvalidInput("resample_fraction must be > 0".into()));
        }
        self.train.validate()?;
        self.qd.validate()
    }
}

/// Which rows a member trained on, identified by a digest of the indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub member: usize,
    pub seed: u64,
    pub n: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEnsemble {
    pub target: String,
    pub kind: EnsembleKind,
    pub inputs: AnnInputs,
    pub members: Vec<Network>,
    pub variance_net: Option<Network>,
    pub records: Vec<ResampleRecord>,
    /// Degrees of freedom for the bootstrap t-quantile.
    pub dof: Option<usize>,
    pub aggregation: Aggregation,
}

fn digest(idx: &[usize]) -> String {
    let mut h = Sha256::new();
    for i in idx {
        h.update((*i as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn resample(pool: &[usize], fraction: f64, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_57A9_0000_0001);
    let n = ((pool.len() as f64 * fraction).round() as usize).max(1);
    (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn check_xy(x: &[Vec<f64>], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < min {
        return Err(Error::InsufficientData(format!("need at least {min} samples, got {}", x.len())));
    }
    Ok(())
}

fn pick(x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
}

/// Mean and unbiased spread of member predictions.
pub fn moments(preds: &[f64]) -> Result<(f64, f64)> {
    if preds.len() < 2 {
        return Err(Error::InsufficientEnsemble {
            needed: 2,
            have: preds.len(),
        });
    }
    let b = preds.len() as f64;
    let m = preds.iter().sum::<f64>() / b;
    let v = preds.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (b - 1.0);
    Ok((m, v))
}

/// Trains `members` point networks on bootstrap resamples of the first 80%
/// (by default) of a seeded shuffle, then a variance network on residuals of
/// the remaining rows. Member `j` uses seed `seed + j`.
pub fn train_bootstrap_ensemble(
    target: &str,
    inputs: &AnnInputs,
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<NetworkEnsemble> {
    cfg.validate()?;
    if cfg.members < 2 {
        return Err(Error::InsufficientEnsemble {
            needed: 2,
            have: cfg.members,
        });
    }
    check_xy(x, y, 10)?;
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x4E1D_0F17_5EED_0002));
    let n_held = ((x.len() as f64 * cfg.heldout_fraction).round() as usize).clamp(3, x.len() - 3);
    let (held, pool) = order.split_at(n_held);
    let mut held = held.to_vec();
    held.sort_unstable();

    let spec = |j: usize, hidden: usize| NetworkSpec {
        input_dim: inputs.dim(),
        hidden,
        output_dim: 1,
        seed: seed.wrapping_add(j as u64),
    };
    let trained: Vec<(Network, ResampleRecord)> = (0..cfg.members)
        .into_par_iter()
        .map(|j| {
            let s = seed.wrapping_add(j as u64);
            let idx = resample(pool, cfg.resample_fraction, s);
            let (xj, yj) = pick(x, y, &idx);
            let net = fit_point(&xj, &yj, spec(j, cfg.hidden), &cfg.train)?;
            let rec = ResampleRecord {
                member: j,
                seed: s,
                n: idx.len(),
                sha256: digest(&idx),
            };
            Ok((net, rec))
        })
        .collect::<Result<_>>()?;
    let (members, records): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    let mut ens = NetworkEnsemble {
        target: target.into(),
        kind: EnsembleKind::Point,
        inputs: inputs.clone(),
        members,
        variance_net: None,
        records,
        dof: None,
        aggregation: cfg.aggregation,
    };

    let (xh, yh) = pick(x, y, &held);
    let r2 = residual_dataset(&ens, &xh, &yh)?;
    let vnet = fit_variance(&xh, &r2, spec(cfg.members, cfg.variance_hidden), &cfg.train)?;
    ens.variance_net = Some(vnet);
    ens.dof = Some(held.len() - 2);
    ens.records.push(ResampleRecord {
        member: cfg.members,
        seed: seed.wrapping_add(cfg.members as u64),
        n: held.len(),
        sha256: digest(&held),
    });
    Ok(ens)
}

/// QD ensemble: each member outputs (upper, lower). Member `j` uses seed
/// `seed + j` and, when `qd_resample` is set, a bootstrap resample.
pub fn train_qd_ensemble(
    target: &str,
    inputs: &AnnInputs,
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<NetworkEnsemble> {
    cfg.validate()?;
    check_xy(x, y, 1)?;
    let all: Vec<usize> = (0..x.len()).collect();
    let trained: Vec<(Network, ResampleRecord)> = (0..cfg.members)
        .into_par_iter()
        .map(|j| {
            let s = seed.wrapping_add(j as u64);
            let idx = if cfg.qd_resample {
                resample(&all, cfg.resample_fraction, s)
            } else {
                all.clone()
            };
            let (xj, yj) = pick(x, y, &idx);
            let spec = NetworkSpec {
                input_dim: inputs.dim(),
                hidden: cfg.hidden,
                output_dim: 2,
                seed: s,
            };
            let net = fit_bounds(&xj, &yj, spec, &cfg.train, &cfg.qd)?;
            let rec = ResampleRecord {
                member: j,
                seed: s,
                n: idx.len(),
                sha256: digest(&idx),
            };
            Ok((net, rec))
        })
        .collect::<Result<_>>()?;
    let (members, records): (Vec<_>, Vec<_>) = trained.into_iter().unzip();
    Ok(NetworkEnsemble {
        target: target.into(),
        kind: EnsembleKind::QdBounds,
        inputs: inputs.clone(),
        members,
        variance_net: None,
        records,
        dof: None,
        aggregation: cfg.aggregation,
    })
}

impl NetworkEnsemble {
    fn require(&self, kind: EnsembleKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidInput(format!("ensemble is {:?}, expected {kind:?}", self.kind)));
        }
        Ok(())
    }

    pub fn member_predictions(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.require(EnsembleKind::Point)?;
        self.members.iter().map(|m| Ok(m.predict(row)?[0])).collect()
    }

    /// Ensemble mean and model-uncertainty variance at `row`.
    pub fn ensemble_moments(&self, row: &[f64]) -> Result<(f64, f64)> {
        moments(&self.member_predictions(row)?)
    }

    pub fn noise_variance(&self, row: &[f64]) -> Result<f64> {
        let v = self
            .variance_net
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("ensemble has no variance network".into()))?;
        Ok(v.predict(row)?[0])
    }

    /// t-quantile used by [`Self::bootstrap_interval`].
    pub fn t_critical(&self, alpha: f64) -> Result<f64> {
        let dof = self
            .dof
            .ok_or_else(|| Error::InvalidInput("ensemble has no variance-net dof".into()))?;
        t_critical(alpha, dof as f64)
    }

    /// Bootstrap interval at a precomputed critical value.
    pub fn bootstrap_interval(&self, row: &[f64], t: f64) -> Result<PredictionInterval> {
        let (y_hat, s2y) = self.ensemble_moments(row)?;
        let s2e = self.noise_variance(row)?;
        Ok(interval_from_variances(y_hat, s2y, s2e, t))
    }

    pub fn bootstrap_pi(&self, row: &[f64], alpha: f64) -> Result<PredictionInterval> {
        self.bootstrap_interval(row, self.t_critical(alpha)?)
    }

    /// Member bounds with each pair ordered so that lower <= upper.
    pub fn member_bounds(&self, row: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.require(EnsembleKind::QdBounds)?;
        self.members
            .iter()
            .map(|m| {
                let b = m.predict(row)?;
                Ok((b[1].min(b[0]), b[1].max(b[0])))
            })
            .collect()
    }

    pub fn qd_pi(&self, row: &[f64], aggregation: Aggregation, alpha: f64) -> Result<PredictionInterval> {
        aggregate_bounds(&self.member_bounds(row)?, aggregation, alpha)
    }

    /// Interval by the ensemble's own kind and aggregation.
    pub fn interval(&self, row: &[f64], alpha: f64, t: f64) -> Result<PredictionInterval> {
        match self.kind {
            EnsembleKind::Point => self.bootstrap_interval(row, t),
            EnsembleKind::QdBounds => self.qd_pi(row, self.aggregation, alpha),
        }
    }

    /// Point prediction (ensemble mean or bound midpoint).
    pub fn predict(&self, row: &[f64], alpha: f64) -> Result<f64> {
        match self.kind {
            EnsembleKind::Point => Ok(self.ensemble_moments(row)?.0),
            EnsembleKind::QdBounds => Ok(self.qd_pi(row, self.aggregation, alpha)?.y_hat),
        }
    }

    /// Writes `manifest.json`, `member_XX.json` and `variance.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            target: self.target.clone(),
            kind: self.kind,
            inputs: self.inputs.clone(),
            members: self.members.len(),
            seeds: self.members.iter().map(|m| m.spec.seed).collect(),
            records: self.records.clone(),
            dof: self.dof,
            aggregation: self.aggregation,
            variance_net: self.variance_net.is_some(),
        };
        write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
        for (j, m) in self.members.iter().enumerate() {
            write(&dir.join(format!("member_{j:02}.json")), &m.to_json()?)?;
        }
        if let Some(v) = &self.variance_net {
            write(&dir.join("variance.json"), &v.to_json()?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let man: Manifest = serde_json::from_str(&read(&dir.join("manifest.json"))?)?;
        let members = (0..man.members)
            .map(|j| Network::from_json(&read(&dir.join(format!("member_{j:02}.json")))?))
            .collect::<Result<Vec<_>>>()?;
        let variance_net = if man.variance_net {
            Some(Network::from_json(&read(&dir.join("variance.json"))?)?)
        } else {
            None
        };
        Ok(NetworkEnsemble {
            target: man.target,
            kind: man.kind,
            inputs: man.inputs,
            members,
            variance_net,
            records: man.records,
            dof: man.dof,
            aggregation: man.aggregation,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    target: String,
    kind: EnsembleKind,
    inputs: AnnInputs,
    members: usize,
    seeds: Vec<u64>,
    records: Vec<ResampleRecord>,
    dof: Option<usize>,
    aggregation: Aggregation,
    variance_net: bool,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `y_hat -/+ t * sqrt(s2y + s2e)`.
pub fn interval_from_variances(y_hat: f64, s2y: f64, s2e: f64, t: f64) -> PredictionInterval {
    let half = t * (s2y + s2e).sqrt();
    PredictionInterval {
        y_hat,
        lower: y_hat - half,
        upper: y_hat + half,
        sigma2_model: Some(s2y),
        sigma2_noise: Some(s2e),
    }
}

/// Squared residuals of held-out data with the ensemble's own spread
/// removed, floored at zero.
pub fn residual_dataset(ens: &NetworkEnsemble, x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    check_xy(x, y, 1)?;
    x.iter()
        .zip(y)
        .map(|(r, t)| {
            let (m, v) = ens.ensemble_moments(r)?;
            Ok(variance_residual(*t, m, v))
        })
        .collect()
}

pub fn variance_residual(y: f64, y_hat: f64, s2y: f64) -> f64 {
    ((y - y_hat).powi(2) - s2y).max(0.0)
}

pub fn aggregate_bounds(bounds: &[(f64, f64)], aggregation: Aggregation, alpha: f64) -> Result<PredictionInterval> {
    if bounds.is_empty() {
        return Err(Error::InsufficientEnsemble { needed: 1, have: 0 });
    }
    let b = bounds.len() as f64;
    let lm = bounds.iter().map(|p| p.0).sum::<f64>() / b;
    let um = bounds.iter().map(|p| p.1).sum::<f64>() / b;
    let (lower, upper) = match aggregation {
        Aggregation::Mean => (lm, um),
        Aggregation::Moment if bounds.len() < 2 => (lm, um),
        Aggregation::Moment => {
            let z = Normal::new(0.0, 1.0)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .inverse_cdf(1.0 - alpha / 2.0);
            let lv = bounds.iter().map(|p| (p.0 - lm).powi(2)).sum::<f64>() / (b - 1.0);
            let uv = bounds.iter().map(|p| (p.1 - um).powi(2)).sum::<f64>() / (b - 1.0);
            (lm - z * lv.sqrt(), um + z * uv.sqrt())
        }
    };
    let (lower, upper) = (lower.min(upper), lower.max(upper));
    Ok(PredictionInterval {
        y_hat: 0.5 * (lower + upper),
        lower,
        upper,
        sigma2_model: None,
        sigma2_noise: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn small_cfg(members: usize) -> EnsembleConfig {
        EnsembleConfig {
            members,
            train: TrainConfig {
                epochs: 40,
                batch_size: 64,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
            ..EnsembleConfig::default()
        }
    }

    fn inputs1() -> AnnInputs {
        AnnInputs::parse(&["u"]).unwrap()
    }

    /// y = sin(2x) + N(0, sd(x)^2) with sd(x) = 0.05 + 0.1 (x + 1).
    fn hetero(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let y = x
            .iter()
            .map(|r| (2.0 * r[0]).sin() + sd(r[0]) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (x, y)
    }

    fn sd(x: f64) -> f64 {
        0.05 + 0.1 * (x + 1.0)
    }

    #[test]
    fn moments_by_hand() {
        assert_eq!(moments(&[1.0, 3.0]).unwrap(), (2.0, 2.0));
        assert_eq!(moments(&[0.7; 4]).unwrap().1, 0.0);
        assert!(matches!(moments(&[1.0]), Err(Error::InsufficientEnsemble { needed: 2, have: 1 })));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(variance_residual(3.0, 3.0, 0.0), 0.0);
        assert!((variance_residual(5f64.sqrt(), 0.0, 2.0) - 3.0).abs() < 1e-12);
        assert_eq!(variance_residual(1.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn interval_from_variances_examples() {
        let z = interval_from_variances(1.5, 0.0, 0.0, 2.0);
        assert_eq!((z.lower, z.upper), (1.5, 1.5));
        let t = t_critical(0.05, 1e7).unwrap();
        let p = interval_from_variances(0.0, 0.25, 0.75, t);
        assert!((p.upper - 1.959964).abs() < 1e-5);
        assert_eq!(p.sigma2_model.unwrap() + p.sigma2_noise.unwrap(), 1.0);
        let mut last = 0.0;
        for s2e in [0.0, 0.1, 0.5, 2.0] {
            let w = interval_from_variances(0.0, 0.3, s2e, t).width();
            assert!(w > last);
            last = w;
        }
    }

    #[test]
    fn aggregation_examples() {
        let one = aggregate_bounds(&[(0.2, 1.4)], Aggregation::Mean, 0.05).unwrap();
        assert_eq!((one.lower, one.upper), (0.2, 1.4));
        let one_m = aggregate_bounds(&[(0.2, 1.4)], Aggregation::Moment, 0.05).unwrap();
        assert_eq!((one_m.lower, one_m.upper), (0.2, 1.4));
        let two = aggregate_bounds(&[(0.0, 2.0), (1.0, 3.0)], Aggregation::Mean, 0.05).unwrap();
        assert_eq!((two.lower, two.upper, two.y_hat), (0.5, 2.5, 1.5));
        let mom = aggregate_bounds(&[(0.0, 2.0), (1.0, 3.0)], Aggregation::Moment, 0.05).unwrap();
        assert!(mom.lower < 0.5 && mom.upper > 2.5);
    }

    proptest! {
        #[test]
        fn aggregated_interval_well_formed(
            b in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..8),
            moment in any::<bool>(),
        ) {
            let agg = if moment { Aggregation::Moment } else { Aggregation::Mean };
            let ordered: Vec<(f64, f64)> = b.iter().map(|p| (p.0.min(p.1), p.0.max(p.1))).collect();
            let pi = aggregate_bounds(&ordered, agg, 0.05).unwrap();
            prop_assert!(pi.lower <= pi.y_hat && pi.y_hat <= pi.upper);
            let mut rev = ordered.clone();
            rev.reverse();
            let pr = aggregate_bounds(&rev, agg, 0.05).unwrap();
            prop_assert!((pr.width() - pi.width()).abs() < 1e-12);
        }

        #[test]
        fn moments_match_two_pass(p in prop::collection::vec(-1e3f64..1e3, 2..30)) {
            let (m, v) = moments(&p).unwrap();
            let mut s = 0.0;
            for x in &p { s += x; }
            let mean = s / p.len() as f64;
            let mut ss = 0.0;
            for x in &p { ss += (x - mean) * (x - mean); }
            prop_assert!((m - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!((v - ss / (p.len() - 1) as f64).abs() <= 1e-9 * v.max(1.0));
        }
    }

    #[test]
    fn minimal_bootstrap_ensemble() {
        let (x, y) = hetero(400, 1);
        let ens = train_bootstrap_ensemble("Fx", &inputs1(), &x, &y, &small_cfg(2), 5).unwrap();
        assert_eq!(ens.members.len(), 2);
        assert_ne!(ens.records[0].sha256, ens.records[1].sha256);
        assert_eq!(ens.dof, Some(80 - 2));
        let pi = ens.bootstrap_pi(&[0.3], 0.05).unwrap();
        assert!(pi.lower <= pi.y_hat && pi.y_hat <= pi.upper);
        let reordered = NetworkEnsemble {
            members: ens.members.iter().rev().cloned().collect(),
            ..ens.clone()
        };
        let pr = reordered.bootstrap_pi(&[0.3], 0.05).unwrap();
        assert!((pr.width() - pi.width()).abs() < 1e-12);
        assert!(train_bootstrap_ensemble("Fx", &inputs1(), &x, &y, &small_cfg(1), 5).is_err());
    }

    #[test]
    fn variance_net_recovers_known_noise() {
        let (x, y) = hetero(10_000, 2);
        let ens = train_bootstrap_ensemble("Fx", &inputs1(), &x, &y, &small_cfg(5), 9).unwrap();
        let grid: Vec<f64> = (0..21).map(|k| -0.9 + 0.09 * k as f64).collect();
        let est: f64 = grid.iter().map(|g| ens.noise_variance(&[*g]).unwrap()).sum::<f64>() / 21.0;
        let truth: f64 = grid.iter().map(|g| sd(*g).powi(2)).sum::<f64>() / 21.0;
        assert!((est / truth - 1.0).abs() < 0.3, "{est} vs {truth}");
    }

    #[test]
    fn bootstrap_and_qd_coverage_on_linear_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let y = x.iter().map(|r| 1.5 * r[0] + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            (x, y)
        };
        // Pipeline-sized training set with default settings.
        let (x, y) = gen(&mut rng, 20_000);
        let (xt, yt) = gen(&mut rng, 10_000);
        let cfg = EnsembleConfig::default();
        let boot = train_bootstrap_ensemble("Fx", &inputs1(), &x, &y, &cfg, 1).unwrap();
        let qd = train_qd_ensemble("Fx", &inputs1(), &x, &y, &cfg, 1).unwrap();
        let t = boot.t_critical(0.05).unwrap();
        let cover = |e: &NetworkEnsemble| {
            xt.iter().zip(&yt).filter(|(r, v)| e.interval(r, 0.05, t).unwrap().contains(**v)).count() as f64
                / yt.len() as f64
        };
        let (pb, pq) = (cover(&boot), cover(&qd));
        assert!((0.90..=0.99).contains(&pb), "bootstrap {pb}");
        assert!((0.90..=0.99).contains(&pq), "qd {pq}");
    }

    #[test]
    fn qd_constant_target_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
            let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let y = (0..n).map(|_| 2.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            (x, y)
        };
        let (x, y) = gen(&mut rng, 3000);
        let (xt, yt) = gen(&mut rng, 3000);
        let ens = train_qd_ensemble("Fz", &inputs1(), &x, &y, &small_cfg(3), 8).unwrap();
        let inside = xt
            .iter()
            .zip(&yt)
            .filter(|(r, v)| ens.qd_pi(r, Aggregation::Mean, 0.05).unwrap().contains(**v))
            .count();
        assert!(inside as f64 / 3000.0 >= 0.9, "{inside}");
        let ordered = x
            .iter()
            .filter(|r| {
                let b = ens.members[0].predict(r).unwrap();
                b[0] >= b[1]
            })
            .count();
        assert!(ordered as f64 / x.len() as f64 >= 0.99);
        assert!(matches!(ens.ensemble_moments(&[0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn qd_without_penalty_shrinks() {
        let (x, y) = hetero(2000, 6);
        let qd = QdConfig {
            lambda: 0.0,
            ..QdConfig::default()
        };
        let spec = NetworkSpec {
            input_dim: 1,
            hidden: 20,
            output_dim: 2,
            seed: 3,
        };
        let widths: Vec<f64> = [10, 20, 30, 40, 50]
            .iter()
            .map(|&epochs| {
                let c = TrainConfig {
                    epochs,
                    ..TrainConfig::default()
                };
                let n = fit_bounds(&x, &y, spec.clone(), &c, &qd).unwrap();
                x.iter()
                    .map(|r| {
                        let b = n.predict(r).unwrap();
                        b[0] - b[1]
                    })
                    .sum::<f64>()
                    / x.len() as f64
            })
            .collect();
        assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
    }

    #[test]
    fn save_load_round_trip() {
        let (x, y) = hetero(300, 3);
        let ens = train_bootstrap_ensemble("My", &inputs1(), &x, &y, &small_cfg(2), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ens.save(dir.path()).unwrap();
        assert!(dir.path().join("variance.json").exists());
        let back = NetworkEnsemble::load(dir.path()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn poly_interval_conversion_splits_variance() {
        let p = PolyInterval {
            y_hat: 1.0,
            lower: 0.0,
            upper: 2.0,
            sigma0: 2.0,
            leverage: 0.25,
        };
        let pi = PredictionInterval::from(p);
        assert!((pi.sigma2_model.unwrap() + pi.sigma2_noise.unwrap() - 4.0).abs() < 1e-12);
        assert!((pi.sigma2_noise.unwrap() - 3.2).abs() < 1e-12);
    }
}
