//! Experiment orchestration: identification of all three model kinds, Monte
//! Carlo validation of their intervals under injected noise, and the
//! velocity-band interpolation/extrapolation study.

pub mod experiment;
pub mod identify;
pub mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use experiment::{run_interp_extrap, BandCheck, BandRow, ExperimentOutput, ModelTermRow};
pub use identify::{identify_all, identify_target, MethodStatus, StepRow};
pub use validate::{run_numerical_validation, PartialValidation, Trace, ValidationOutput, ValidationRun};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::pi::{NetworkEnsemble, PredictionInterval};
use crate::polyreg::PolynomialModel;
use crate::target::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Polynomial,
    Bootstrap,
    QualityDriven,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Polynomial, Method::Bootstrap, Method::QualityDriven];

    pub fn name(self) -> &'static str {
        match self {
            Method::Polynomial => "polynomial",
            Method::Bootstrap => "bootstrap",
            Method::QualityDriven => "quality_driven",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where validation intervals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Once, at the clean validation inputs.
    #[default]
    Clean,
    /// Per realization, at the noisy inputs.
    Noisy,
}

/// Identified models of one target, one slot per method.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetModels {
    pub target: Option<Target>,
    pub polynomial: Option<PolynomialModel>,
    pub bootstrap: Option<NetworkEnsemble>,
    pub quality_driven: Option<NetworkEnsemble>,
}

impl TargetModels {
    pub fn new(target: Target) -> Self {
        TargetModels {
            target: Some(target),
            ..Default::default()
        }
    }

    pub fn target(&self) -> Target {
        self.target.expect("TargetModels without a target")
    }

    /// Methods with a model present, in canonical order.
    pub fn methods(&self) -> Vec<Method> {
        Method::ALL.into_iter().filter(|m| self.has(*m)).collect()
    }

    pub fn has(&self, m: Method) -> bool {
        match m {
            Method::Polynomial => self.polynomial.is_some(),
            Method::Bootstrap => self.bootstrap.is_some(),
            Method::QualityDriven => self.quality_driven.is_some(),
        }
    }

    fn missing(&self, m: Method) -> Error {
        Error::InvalidInput(format!("no {m} model for {}", self.target()))
    }

    fn ensemble(&self, m: Method) -> Result<&NetworkEnsemble> {
        let e = match m {
            Method::Bootstrap => self.bootstrap.as_ref(),
            Method::QualityDriven => self.quality_driven.as_ref(),
            Method::Polynomial => None,
        };
        e.ok_or_else(|| self.missing(m))
    }

    /// Prediction intervals at each input.
    pub fn intervals(&self, m: Method, xs: &[FeatureVector], alpha: f64) -> Result<Vec<PredictionInterval>> {
        if m == Method::Polynomial {
            let p = self.polynomial.as_ref().ok_or_else(|| self.missing(m))?;
            return xs.iter().map(|x| Ok(p.interval_at(x, alpha)?.into())).collect();
        }
        let e = self.ensemble(m)?;
        let t = match m {
            Method::Bootstrap => e.t_critical(alpha)?,
            _ => f64::NAN,
        };
        xs.iter().map(|x| e.interval(&e.inputs.row(x), alpha, t)).collect()
    }

    /// Point predictions: polynomial output, ensemble mean, or QD bound midpoint.
    pub fn points(&self, m: Method, xs: &[FeatureVector], alpha: f64) -> Result<Vec<f64>> {
        match m {
            Method::Polynomial => {
                let p = self.polynomial.as_ref().ok_or_else(|| self.missing(m))?;
                Ok(xs.iter().map(|x| p.predict(x)).collect())
            }
            _ => {
                let e = self.ensemble(m)?;
                xs.iter().map(|x| e.predict(&e.inputs.row(x), alpha)).collect()
            }
        }
    }

    /// Writes `polynomial.json`, `bootstrap/` and `quality_driven/` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if let Some(p) = &self.polynomial {
            p.save(&dir.join("polynomial.json"))?;
        }
        if let Some(e) = &self.bootstrap {
            e.save(&dir.join(Method::Bootstrap.name()))?;
        }
        if let Some(e) = &self.quality_driven {
            e.save(&dir.join(Method::QualityDriven.name()))?;
        }
        Ok(())
    }

    /// Loads the requested methods from `dir`; each must be present.
    pub fn load(dir: &Path, target: Target, methods: &[Method]) -> Result<Self> {
        let mut out = TargetModels::new(target);
        for m in methods {
            match m {
                Method::Polynomial => out.polynomial = Some(PolynomialModel::load(&dir.join("polynomial.json"))?),
                Method::Bootstrap => out.bootstrap = Some(NetworkEnsemble::load(&dir.join(m.name()))?),
                Method::QualityDriven => out.quality_driven = Some(NetworkEnsemble::load(&dir.join(m.name()))?),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Feature;
    use crate::polyreg::Term;

    #[test]
    fn method_names_match_serde() {
        for m in Method::ALL {
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }

    #[test]
    fn missing_model_is_an_error() {
        let tm = TargetModels::new(Target::Fx);
        let x = vec![FeatureVector::zeros()];
        assert!(tm.intervals(Method::Bootstrap, &x, 0.05).is_err());
        assert!(tm.points(Method::Polynomial, &x, 0.05).is_err());
        assert!(tm.methods().is_empty());
    }

    #[test]
    fn polynomial_points_and_save_load() {
        let mut tm = TargetModels::new(Target::Fx);
        tm.polynomial = Some(
            PolynomialModel::fixed("Fx", vec![Term::bias(), Term::parse("mu_x").unwrap()], vec![1.0, 2.0]).unwrap(),
        );
        let mut x = FeatureVector::zeros();
        x.set(Feature::MuX, 0.5);
        assert_eq!(tm.points(Method::Polynomial, &[x], 0.05).unwrap(), vec![2.0]);
        let dir = tempfile::tempdir().unwrap();
        tm.save(dir.path()).unwrap();
        let back = TargetModels::load(dir.path(), Target::Fx, &[Method::Polynomial]).unwrap();
        assert_eq!(back, tm);
        assert!(TargetModels::load(dir.path(), Target::Fx, &[Method::Bootstrap]).is_err());
    }
}
