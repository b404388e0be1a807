//! Run configuration: one TOML document drives every CLI command.
//!
//! Unknown keys are rejected everywhere. Preset references are resolved and
//! checked by [`RunConfig::resolve`] before any work starts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{ManeuverSet, NoiseSpec, SplitPolicy, TruthModelSet, Vehicle};
use crate::error::{Error, Result};
use crate::harness::{Anchor, Method};
use crate::metrics::Pooling;
use crate::pi::{AnnInputs, EnsembleConfig};
use crate::polyreg::{expand_pool, CandidatePool, StepwiseCriteria};
use crate::presets;
use crate::target::Target;

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "QUADPI_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub data: DataConfig,
    pub identify: IdentifyConfig,
    pub validate: ValidateConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            alpha: 0.05,
            data: DataConfig::default(),
            identify: IdentifyConfig::default(),
            validate: ValidateConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Preset names or TOML paths for every data ingredient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub vehicle: String,
    pub truth: String,
    pub noise: String,
    pub training: String,
    pub validation: String,
    pub bands: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            vehicle: "sim".into(),
            truth: "sim".into(),
            noise: "sim-sensors".into(),
            training: "sim-training".into(),
            validation: "sim-validation".into(),
            bands: "bands".into(),
        }
    }
}

/// Either a preset family (`sim` selects `sim-fx`, `sim-fy`, ...) or an
/// explicit entry per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerTarget<T> {
    Family(String),
    Explicit(BTreeMap<Target, T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub methods: Vec<Method>,
    pub targets: Vec<Target>,
    /// Pool expressions, or preset names such as `sim-fz`, per target.
    pub pools: PerTarget<String>,
    pub ann_inputs: PerTarget<Vec<String>>,
    pub stepwise: StepwiseCriteria,
    pub ensemble: EnsembleConfig,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            methods: Method::ALL.to_vec(),
            targets: Target::ALL.to_vec(),
            pools: PerTarget::Family("sim".into()),
            ann_inputs: PerTarget::Family("sim".into()),
            stepwise: StepwiseCriteria::default(),
            ensemble: EnsembleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub realizations: usize,
    pub pooling: Pooling,
    pub anchor: Anchor,
    /// Write per-sample interval traces.
    pub traces: bool,
    /// Scales every interval about its centre. Values below 1 narrow them,
    /// which is only useful to exercise enforcement.
    pub width_scale: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            realizations: 100,
            pooling: Pooling::Pooled,
            anchor: Anchor::Clean,
            traces: true,
            width_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub bands: Vec<f64>,
    pub interpolation: Vec<f64>,
    pub extrapolation: Vec<f64>,
    /// Relative slack on the interpolation width check.
    pub interpolation_slack: f64,
    /// Largest relative spread of polynomial widths across band groups.
    pub polynomial_tolerance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            bands: vec![0.0, 5.0, 8.0, 10.0, 14.0],
            interpolation: vec![8.0],
            extrapolation: vec![14.0],
            interpolation_slack: 0.05,
            polynomial_tolerance: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn policy(&self) -> SplitPolicy {
        SplitPolicy::VelocityBands {
            bands: self.bands.clone(),
            interpolation: self.interpolation.clone(),
            extrapolation: self.extrapolation.clone(),
        }
    }
}

/// Per-target model ingredients after preset resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub target: Target,
    pub pool_expr: String,
    pub pool: CandidatePool,
    pub inputs: AnnInputs,
}

/// A configuration with every reference loaded and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub hash: String,
    pub vehicle: Vehicle,
    pub truth: TruthModelSet,
    pub noise: NoiseSpec,
    pub training: ManeuverSet,
    pub validation: ManeuverSet,
    pub bands: ManeuverSet,
    pub targets: Vec<TargetSpec>,
}

fn looks_like_expression(s: &str) -> bool {
    s.contains(['(', '[', '+']) || s == "C0"
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies `QUADPI_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Schema(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.identify.methods.is_empty() || self.identify.targets.is_empty() {
            return Err(Error::Schema("identify.methods and identify.targets must be non-empty".into()));
        }
        if !(self.validate.width_scale > 0.0 && self.validate.width_scale.is_finite()) {
            return Err(Error::Schema("validate.width_scale must be positive".into()));
        }
        if self.validate.realizations == 0 {
            return Err(Error::Schema("validate.realizations must be >= 1".into()));
        }
        self.identify.ensemble.validate().map_err(|e| Error::Schema(format!("identify.ensemble: {e}")))?;
        let e = &self.experiment;
        if !(e.interpolation_slack >= 0.0 && e.polynomial_tolerance >= 0.0) {
            return Err(Error::Schema("experiment tolerances must be >= 0".into()));
        }
        Ok(())
    }

    fn target_spec(&self, target: Target) -> Result<TargetSpec> {
        let pool_expr = match &self.identify.pools {
            PerTarget::Family(f) => presets::pool(&presets::family_key(f, target))?,
            PerTarget::Explicit(m) => {
                let v = m
                    .get(&target)
                    .ok_or_else(|| Error::Schema(format!("identify.pools has no entry for {target}")))?;
                if looks_like_expression(v) {
                    v.clone()
                } else {
                    presets::pool(v)?
                }
            }
        };
        let pool = expand_pool(&pool_expr, None)?;
        let inputs = match &self.identify.ann_inputs {
            PerTarget::Family(f) => presets::ann_inputs(&presets::family_key(f, target))?,
            PerTarget::Explicit(m) => AnnInputs::parse(
                m.get(&target)
                    .ok_or_else(|| Error::Schema(format!("identify.ann_inputs has no entry for {target}")))?,
            )?,
        };
        Ok(TargetSpec {
            target,
            pool_expr,
            pool,
            inputs,
        })
    }

    /// Validates the document and loads every preset it names.
    pub fn resolve(self) -> Result<Resolved> {
        self.validate()?;
        let d = &self.data;
        let targets = self
            .identify
            .targets
            .iter()
            .map(|t| self.target_spec(*t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Resolved {
            hash: self.hash()?,
            vehicle: presets::vehicle(&d.vehicle)?,
            truth: presets::truth(&d.truth)?,
            noise: presets::noise(&d.noise)?,
            training: presets::maneuvers(&d.training)?,
            validation: presets::maneuvers(&d.validation)?,
            bands: presets::maneuvers(&d.bands)?,
            targets,
            config: self,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.resolve().unwrap();
        assert_eq!(r.targets.len(), 6);
        assert_eq!(r.targets[0].inputs.dim(), 3);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_toml("seed = 1\n[validate]\nrealisations = 5\n").unwrap_err();
        let msg = e.to_string();
        assert!(matches!(e, Error::Schema(_)));
        assert!(msg.contains("realisations"), "{msg}");
        assert!(msg.contains("line 3") || msg.contains("3:"), "{msg}");
    }

    #[test]
    fn nested_unknown_key_rejected() {
        let e = RunConfig::from_toml("[identify.ensemble.train]\nepochz = 3\n").unwrap_err();
        assert!(e.to_string().contains("epochz"));
    }

    #[test]
    fn explicit_pools_and_inputs() {
        let c = RunConfig::from_toml(
            r#"
[identify]
targets = ["Fx"]
methods = ["polynomial"]
pools = { Fx = "C0 + [mu_x] + P2(mu_x, mu_z)" }
ann_inputs = { Fx = ["mu_x", "|mu_z|"] }
"#,
        )
        .unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.targets[0].pool.candidates.len(), 4);
        assert_eq!(r.targets[0].inputs.dim(), 2);

        let c = RunConfig::from_toml("[identify]\ntargets = [\"Fz\"]\npools = { Fz = \"sim-fz\" }\n").unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.targets[0].pool_expr, presets::pool("sim-fz").unwrap());
    }

    #[test]
    fn missing_explicit_entry_is_schema_error() {
        let c = RunConfig::from_toml("[identify]\ntargets = [\"Fy\"]\npools = { Fx = \"C0\" }\n").unwrap();
        assert!(matches!(c.resolve(), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_toml("alpha = 1.5").unwrap().resolve().is_err());
        assert!(RunConfig::from_toml("[validate]\nrealizations = 0").unwrap().resolve().is_err());
        assert!(RunConfig::from_toml("[identify]\nmethods = [\"ridge\"]").is_err());
        assert!(RunConfig::from_toml("[data]\nnoise = \"loud\"").unwrap().resolve().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
