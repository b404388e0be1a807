//! Interval width inside, between and beyond the identification envelope.
//!
//! Models trained on the identification bands are evaluated on three band
//! groups. Network widths should grow outside the envelope and not grow
//! between identification bands; the polynomial width is nearly constant,
//! while its model-uncertainty term `sigma_e^2 x0 G x0^T` grows outside.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Method, TargetModels};
use crate::config::ExperimentConfig;
use crate::datagen::splits::{EXTRAPOLATION, IDENTIFICATION, INTERPOLATION};
use crate::datagen::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::metrics::{mpiw, picp};

pub const GROUPS: [&str; 3] = [IDENTIFICATION, INTERPOLATION, EXTRAPOLATION];

/// Coverage and absolute width of one (target, method) on each band group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub target: String,
    pub method: Method,
    /// Indexed like [`GROUPS`].
    pub picp: [f64; 3],
    pub mpiw: [f64; 3],
    pub n: [usize; 3],
}

/// Polynomial model-uncertainty term at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTermRow {
    pub target: String,
    pub group: String,
    pub band: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub target: String,
    pub method: Method,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<BandRow>,
    pub model_terms: Vec<ModelTermRow>,
    pub checks: Vec<BandCheck>,
}

impl ExperimentOutput {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn check(target: &str, method: Method, name: &str, lhs: f64, rhs: f64, pass: bool) -> BandCheck {
    BandCheck {
        target: target.into(),
        method,
        name: name.into(),
        lhs,
        rhs,
        pass,
    }
}

/// Evaluates every model on the three band groups of `splits`, all noisy.
pub fn run_interp_extrap(
    models: &[TargetModels],
    splits: &Splits,
    alpha: f64,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput> {
    let groups: Vec<Dataset> = GROUPS
        .iter()
        .map(|g| {
            let parts = splits.get(g);
            if parts.is_empty() {
                return Err(Error::InvalidPolicy(format!("missing band group '{g}'")));
            }
            Ok(Dataset::concat(g, parts))
        })
        .collect::<Result<_>>()?;
    // Band tag of every sample, per group.
    let sample_bands: Vec<Vec<f64>> = GROUPS
        .iter()
        .map(|g| {
            splits
                .get(g)
                .iter()
                .flat_map(|d| std::iter::repeat_n(d.band.unwrap_or(f64::NAN), d.len()))
                .collect()
        })
        .collect();

    let mut out = ExperimentOutput::default();
    for tm in models {
        let t = tm.target();
        let mut widths: BTreeMap<Method, [f64; 3]> = BTreeMap::new();
        for m in tm.methods() {
            let mut row = BandRow {
                target: t.name().into(),
                method: m,
                picp: [0.0; 3],
                mpiw: [0.0; 3],
                n: [0; 3],
            };
            for (k, ds) in groups.iter().enumerate() {
                let iv = tm.intervals(m, &ds.features, alpha)?;
                row.picp[k] = picp(&iv, &ds.target(t))?;
                row.mpiw[k] = mpiw(&iv, None)?;
                row.n[k] = iv.len();
            }
            widths.insert(m, row.mpiw);
            out.rows.push(row);
        }

        for m in [Method::Bootstrap, Method::QualityDriven] {
            let Some(w) = widths.get(&m) else { continue };
            out.checks.push(check(t.name(), m, "extrapolation_wider", w[2], w[0], w[2] > w[0]));
            let limit = (1.0 + cfg.interpolation_slack) * w[0];
            out.checks.push(check(t.name(), m, "interpolation_not_wider", w[1], limit, w[1] <= limit));
        }

        if let (Some(w), Some(p)) = (widths.get(&Method::Polynomial), &tm.polynomial) {
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = (hi - lo) / lo;
            out.checks.push(check(
                t.name(),
                Method::Polynomial,
                "polynomial_width_constant",
                spread,
                cfg.polynomial_tolerance,
                spread < cfg.polynomial_tolerance,
            ));

            let s2 = p.stats()?.sigma_e2;
            let mut medians = [0.0; 3];
            for (k, ds) in groups.iter().enumerate() {
                let mut vals = Vec::with_capacity(ds.len());
                for (i, x) in ds.features.iter().enumerate() {
                    let v = p.interval_at(x, alpha)?.model_term(s2);
                    vals.push(v);
                    out.model_terms.push(ModelTermRow {
                        target: t.name().into(),
                        group: GROUPS[k].into(),
                        band: sample_bands[k][i],
                        value: v,
                    });
                }
                medians[k] = median(&vals);
            }
            out.checks.push(check(
                t.name(),
                Method::Polynomial,
                "model_term_median_larger",
                medians[2],
                medians[0],
                medians[2] > medians[0],
            ));
        }
    }
    Ok(out)
}

fn writer(path: &std::path::Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub const BAND_HEADER: [&str; 8] = [
    "target",
    "method",
    "picp_identification",
    "mpiw_identification",
    "picp_interpolation",
    "mpiw_interpolation",
    "picp_extrapolation",
    "mpiw_extrapolation",
];

pub fn write_band_table(path: &std::path::Path, rows: &[BandRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BAND_HEADER)?;
    for r in rows {
        let mut rec = vec![r.target.clone(), r.method.name().to_string()];
        for k in 0..3 {
            rec.push(format!("{:.6}", r.picp[k]));
            rec.push(format!("{:.6e}", r.mpiw[k]));
        }
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_model_terms(path: &std::path::Path, rows: &[ModelTermRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["target", "group", "band", "value"])?;
    for r in rows {
        w.write_record([r.target.clone(), r.group.clone(), format!("{}", r.band), format!("{:.6e}", r.value)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_checks(path: &std::path::Path, checks: &[BandCheck]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["target", "method", "check", "lhs", "rhs", "pass"])?;
    for c in checks {
        w.write_record([
            c.target.clone(),
            c.method.name().to_string(),
            c.name.clone(),
            format!("{:.6e}", c.lhs),
            format!("{:.6e}", c.rhs),
            c.pass.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Human-readable summary of the checks, one line each.
pub fn footer(checks: &[BandCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{} {:<3} {:<15} {:<26} {:.4e} vs {:.4e}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.target,
            c.method.name(),
            c.name,
            c.lhs,
            c.rhs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::datagen::{generate_set, inject_noise, make_splits};
    use crate::harness::identify_all;
    use crate::presets;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn missing_group_is_an_error() {
        let splits = Splits {
            partitions: BTreeMap::new(),
        };
        let e = run_interp_extrap(&[], &splits, 0.05, &ExperimentConfig::default()).unwrap_err();
        assert!(matches!(e, Error::InvalidPolicy(_)));
    }

    #[test]
    fn polynomial_band_study_small() {
        let v = presets::vehicle("sim").unwrap();
        let truth = presets::truth("sim").unwrap();
        let mut set = presets::maneuvers("bands").unwrap();
        for m in &mut set.maneuver {
            m.duration = 5.0;
        }
        let noise = presets::noise("sim-sensors").unwrap();
        let data: Vec<Dataset> = generate_set(&set, &v, &truth, 1)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, d)| inject_noise(d, &noise, &v, 100 + i as u64).unwrap())
            .collect();
        let cfg = ExperimentConfig::default();
        let splits = make_splits(data, &cfg.policy()).unwrap();
        let rc = RunConfig::from_toml("[identify]\ntargets = [\"Fx\", \"My\"]\nmethods = [\"polynomial\"]").unwrap();
        let r = rc.resolve().unwrap();
        let train = Dataset::concat("id", splits.get(IDENTIFICATION));
        let (models, st) = identify_all(&r.targets, &[Method::Polynomial], &r.config.identify, &train, 0);
        assert!(st.iter().all(|s| s.ok), "{st:?}");
        let out = run_interp_extrap(&models, &splits, 0.05, &cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.checks.len(), 4);
        let n_total: usize = out.rows[0].n.iter().sum();
        assert_eq!(out.model_terms.len(), 2 * n_total);
        for c in &out.checks {
            assert!(c.pass, "{c:?}");
        }
        let bands: Vec<f64> = out.model_terms.iter().filter(|m| m.group == EXTRAPOLATION).map(|m| m.band).collect();
        assert!(bands.iter().all(|b| *b == 14.0));
        assert!(footer(&out.checks).lines().all(|l| l.starts_with("PASS")));
    }
}
