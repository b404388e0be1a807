//! Identification of every (target, method) pair on one training dataset.

use serde::{Deserialize, Serialize};

use super::{Method, TargetModels};
use crate::config::{IdentifyConfig, TargetSpec};
use crate::datagen::{derive_seed, Dataset};
use crate::error::Result;
use crate::pi::{train_bootstrap_ensemble, train_qd_ensemble};
use crate::polyreg::{stepwise_fit, StepAction};

/// Outcome of one fit; failures carry the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStatus {
    pub target: String,
    pub method: Method,
    pub ok: bool,
    pub detail: String,
}

/// One stepwise entry of an identified polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub target: String,
    pub step: usize,
    pub action: StepAction,
    pub term: String,
    pub r2: f64,
    pub coefficient: Option<f64>,
}

/// Seed of one (target, method) fit.
pub fn fit_seed(seed: u64, spec: &TargetSpec, m: Method) -> u64 {
    derive_seed(seed, (spec.target.index() * 8 + m.index()) as u64)
}

/// Fits the requested methods for one target. A failing method is recorded
/// and the others still run.
pub fn identify_target(
    spec: &TargetSpec,
    methods: &[Method],
    cfg: &IdentifyConfig,
    train: &Dataset,
    seed: u64,
) -> (TargetModels, Vec<MethodStatus>) {
    let t = spec.target;
    let y = train.target(t);
    let mut models = TargetModels::new(t);
    let mut statuses = Vec::new();
    let rows = if methods.iter().any(|m| *m != Method::Polynomial) {
        spec.inputs.rows(&train.features)
    } else {
        Vec::new()
    };
    for &m in methods {
        let s = fit_seed(seed, spec, m);
        let res: Result<String> = match m {
            Method::Polynomial => stepwise_fit(t.name(), &spec.pool, &train.features, &y, &cfg.stepwise).map(|p| {
                let msg = format!("{} terms, R2 {:.4}", p.terms.len(), p.fit.as_ref().map_or(f64::NAN, |f| f.r2));
                models.polynomial = Some(p);
                msg
            }),
            Method::Bootstrap => train_bootstrap_ensemble(t.name(), &spec.inputs, &rows, &y, &cfg.ensemble, s).map(|e| {
                let msg = format!("{} members + variance net", e.members.len());
                models.bootstrap = Some(e);
                msg
            }),
            Method::QualityDriven => train_qd_ensemble(t.name(), &spec.inputs, &rows, &y, &cfg.ensemble, s).map(|e| {
                let msg = format!("{} members", e.members.len());
                models.quality_driven = Some(e);
                msg
            }),
        };
        statuses.push(MethodStatus {
            target: t.name().into(),
            method: m,
            ok: res.is_ok(),
            detail: res.unwrap_or_else(|e| e.to_string()),
        });
    }
    (models, statuses)
}

pub fn identify_all(
    specs: &[TargetSpec],
    methods: &[Method],
    cfg: &IdentifyConfig,
    train: &Dataset,
    seed: u64,
) -> (Vec<TargetModels>, Vec<MethodStatus>) {
    let mut all = Vec::with_capacity(specs.len());
    let mut statuses = Vec::new();
    for spec in specs {
        let (m, s) = identify_target(spec, methods, cfg, train, seed);
        all.push(m);
        statuses.extend(s);
    }
    (all, statuses)
}

/// Stepwise trace of every identified polynomial. Coefficients are those of
/// the final model, attached to the step that last added each term.
pub fn step_rows(models: &[TargetModels]) -> Vec<StepRow> {
    let mut out = Vec::new();
    for tm in models {
        let Some(p) = &tm.polynomial else { continue };
        let Some(fit) = &p.fit else { continue };
        for (k, s) in fit.steps.iter().enumerate() {
            let last_add = fit.steps[k + 1..].iter().all(|later| later.term != s.term);
            let coefficient = if s.action != StepAction::Removed && last_add {
                p.terms.iter().position(|t| *t == s.term).map(|j| p.coefficients[j])
            } else {
                None
            };
            out.push(StepRow {
                target: tm.target().name().into(),
                step: k,
                action: s.action,
                term: s.term.canonical(),
                r2: s.r2,
                coefficient,
            });
        }
    }
    out
}
