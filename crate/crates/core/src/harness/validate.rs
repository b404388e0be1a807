//! Monte Carlo validation of prediction intervals under injected noise.
//!
//! For each realization `r` fresh sensor noise is injected into the clean
//! validation set with seed `master ^ r`. Model-variation containment scores
//! the model's prediction at the noisy inputs against the interval;
//! measurement-variation containment scores the noisy measurement. Counts are
//! integers, so the pooled result does not depend on reduction order.

use rayon::prelude::*;

use super::{Anchor, Method, TargetModels};
use crate::datagen::{inject_noise, Dataset, NoiseSpec, Vehicle};
use crate::error::{Error, Result};
use crate::metrics::{combine, mpiw, picp, value_range, ContainmentKind, PIQualityReport, Pooling, ReportRow, Tally};
use crate::pi::PredictionInterval;
use crate::stats::KahanSum;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRun {
    pub alpha: f64,
    pub realizations: usize,
    pub pooling: Pooling,
    pub anchor: Anchor,
    pub seed: u64,
    /// Scales every interval about its centre (1 leaves them unchanged).
    pub width_scale: f64,
}

impl ValidationRun {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidInput("n_realizations must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if !(self.width_scale > 0.0 && self.width_scale.is_finite()) {
            return Err(Error::InvalidInput("width_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Intervals of one (target, method) on the clean validation inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub target: String,
    pub method: Method,
    pub timestamps: Vec<f64>,
    pub y: Vec<f64>,
    pub intervals: Vec<PredictionInterval>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationOutput {
    pub rows: Vec<ReportRow>,
    pub traces: Vec<Trace>,
}

/// Whatever finished before a failure, plus the failure.
#[derive(Debug)]
pub struct PartialValidation {
    pub partial: ValidationOutput,
    pub error: Error,
}

fn scale(iv: &mut [PredictionInterval], k: f64) {
    if k == 1.0 {
        return;
    }
    for p in iv {
        let c = 0.5 * (p.lower + p.upper);
        let h = 0.5 * (p.upper - p.lower) * k;
        p.lower = c - h;
        p.upper = c + h;
    }
}

/// Per-realization counts for one (target, method).
#[derive(Debug, Clone, Copy, Default)]
struct RunCounts {
    model: Tally,
    measurement: Tally,
    width: f64,
}

struct Pair<'a> {
    models: &'a TargetModels,
    method: Method,
    clean: Vec<PredictionInterval>,
    clean_points: Vec<f64>,
}

fn realization(
    pairs: &[Pair],
    run: &ValidationRun,
    clean: &Dataset,
    noise: &NoiseSpec,
    vehicle: &Vehicle,
    r: usize,
) -> Result<Vec<RunCounts>> {
    let noisy = inject_noise(clean, noise, vehicle, run.seed ^ r as u64)?;
    pairs
        .iter()
        .map(|p| {
            let t = p.models.target();
            let mut c = RunCounts::default();
            let meas: Vec<f64> = noisy.targets.iter().map(|y| y[t.index()]).collect();
            match run.anchor {
                Anchor::Clean => {
                    let pred = p.models.points(p.method, &noisy.features, run.alpha)?;
                    for (i, iv) in p.clean.iter().enumerate() {
                        c.model.add(iv.contains(pred[i]));
                        c.measurement.add(iv.contains(meas[i]));
                    }
                    c.width = p.clean.iter().map(PredictionInterval::width).sum::<f64>();
                }
                Anchor::Noisy => {
                    let mut ivs = p.models.intervals(p.method, &noisy.features, run.alpha)?;
                    scale(&mut ivs, run.width_scale);
                    let mut w = KahanSum::default();
                    for (i, iv) in ivs.iter().enumerate() {
                        c.model.add(iv.contains(p.clean_points[i]));
                        c.measurement.add(iv.contains(meas[i]));
                        w.add(iv.width());
                    }
                    c.width = w.value();
                }
            }
            Ok(c)
        })
        .collect()
}

/// Runs the validation for every method present in `models`.
///
/// `train` is the (noisy) identification data, used for the training-total
/// rows. `clean` is the noise-free validation set.
pub fn run_numerical_validation(
    run: &ValidationRun,
    models: &[TargetModels],
    train: &Dataset,
    clean: &Dataset,
    noise: &NoiseSpec,
    vehicle: &Vehicle,
) -> std::result::Result<ValidationOutput, PartialValidation> {
    let mut out = ValidationOutput::default();
    let fail = |partial: ValidationOutput, error: Error| PartialValidation { partial, error };
    if let Err(e) = run.validate() {
        return Err(fail(out, e));
    }
    if clean.is_empty() || train.is_empty() {
        return Err(fail(out, Error::InsufficientData("empty validation or training set".into())));
    }

    // Training totals and clean-input intervals.
    let mut pairs = Vec::new();
    for tm in models {
        let t = tm.target();
        let y_train = train.target(t);
        let y_clean = clean.target(t);
        for m in tm.methods() {
            let step = || -> Result<(ReportRow, Pair)> {
                let mut iv = tm.intervals(m, &train.features, run.alpha)?;
                scale(&mut iv, run.width_scale);
                let range = value_range(&y_train).ok();
                let row = ReportRow {
                    target: t.name().into(),
                    method: m.name().into(),
                    report: PIQualityReport {
                        picp: picp(&iv, &y_train)?,
                        mpiw_abs: mpiw(&iv, None)?,
                        mpiw_norm: range.map(|r| mpiw(&iv, Some(r))).transpose()?,
                        n_samples: iv.len(),
                        kind: ContainmentKind::TrainingTotal,
                    },
                };
                let mut clean_iv = tm.intervals(m, &clean.features, run.alpha)?;
                scale(&mut clean_iv, run.width_scale);
                let clean_points = clean_iv.iter().map(|p| p.y_hat).collect();
                Ok((
                    row,
                    Pair {
                        models: tm,
                        method: m,
                        clean: clean_iv,
                        clean_points,
                    },
                ))
            };
            match step() {
                Ok((row, pair)) => {
                    out.traces.push(Trace {
                        target: t.name().into(),
                        method: m,
                        timestamps: clean.timestamps.clone(),
                        y: y_clean.clone(),
                        intervals: pair.clean.clone(),
                    });
                    out.rows.push(row);
                    pairs.push(pair);
                }
                Err(e) => return Err(fail(out, e)),
            }
        }
    }

    let counts: Result<Vec<Vec<RunCounts>>> = (0..run.realizations)
        .into_par_iter()
        .map(|r| realization(&pairs, run, clean, noise, vehicle, r))
        .collect();
    let counts = match counts {
        Ok(c) => c,
        Err(e) => return Err(fail(out, e)),
    };

    let n = clean.len();
    let mut rows = Vec::new();
    for (k, p) in pairs.iter().enumerate() {
        let t = p.models.target();
        let range = value_range(&clean.target(t)).ok();
        let mpiw_abs = match run.anchor {
            Anchor::Clean => match mpiw(&p.clean, None) {
                Ok(v) => v,
                Err(e) => return Err(fail(out, e)),
            },
            Anchor::Noisy => {
                let mut s = KahanSum::default();
                for c in &counts {
                    s.add(c[k].width);
                }
                s.value() / (n * run.realizations) as f64
            }
        };
        for (kind, tallies) in [
            (ContainmentKind::ModelVariation, counts.iter().map(|c| c[k].model).collect::<Vec<_>>()),
            (ContainmentKind::MeasurementVariation, counts.iter().map(|c| c[k].measurement).collect()),
        ] {
            rows.push(ReportRow {
                target: t.name().into(),
                method: p.method.name().into(),
                report: PIQualityReport {
                    picp: combine(&tallies, run.pooling),
                    mpiw_abs,
                    mpiw_norm: range.map(|r| mpiw_abs / r),
                    n_samples: n * run.realizations,
                    kind,
                },
            });
        }
    }

    // Interleave so each (target, method) block reads training, model, measurement.
    let mut ordered = Vec::with_capacity(out.rows.len() + rows.len());
    for (k, train_row) in out.rows.drain(..).enumerate() {
        ordered.push(train_row);
        ordered.push(rows[2 * k].clone());
        ordered.push(rows[2 * k + 1].clone());
    }
    out.rows = ordered;
    Ok(out)
}

/// Writes `timestamp, y, y_hat, lower, upper` for one trace.
pub fn write_trace_csv(path: &std::path::Path, trace: &Trace) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["timestamp", "y", "y_hat", "lower", "upper"])?;
    for (i, iv) in trace.intervals.iter().enumerate() {
        w.write_record([
            format!("{}", trace.timestamps[i]),
            format!("{:e}", trace.y[i]),
            format!("{:e}", iv.y_hat),
            format!("{:e}", iv.lower),
            format!("{:e}", iv.upper),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
