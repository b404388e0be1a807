//! Interval quality: coverage probability and mean width.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pi::PredictionInterval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainmentKind {
    TrainingTotal,
    ModelVariation,
    MeasurementVariation,
    Identification,
    Interpolation,
    Extrapolation,
}

impl ContainmentKind {
    pub fn name(self) -> &'static str {
        match self {
            ContainmentKind::TrainingTotal => "training_total",
            ContainmentKind::ModelVariation => "model_variation",
            ContainmentKind::MeasurementVariation => "measurement_variation",
            ContainmentKind::Identification => "identification",
            ContainmentKind::Interpolation => "interpolation",
            ContainmentKind::Extrapolation => "extrapolation",
        }
    }
}

/// How coverage over several Monte Carlo runs is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One fraction over every (sample, realization) pair.
    #[default]
    Pooled,
    /// Mean of the per-realization fractions.
    PerRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PIQualityReport {
    pub picp: f64,
    pub mpiw_abs: f64,
    pub mpiw_norm: Option<f64>,
    pub n_samples: usize,
    pub kind: ContainmentKind,
}

fn non_empty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InsufficientData("no intervals".into()));
    }
    Ok(())
}

/// Fraction of observations inside their closed intervals.
pub fn picp(intervals: &[PredictionInterval], y: &[f64]) -> Result<f64> {
    non_empty(intervals.len())?;
    if intervals.len() != y.len() {
        return Err(Error::Dimension {
            expected: intervals.len(),
            got: y.len(),
        });
    }
    let inside = intervals.iter().zip(y).filter(|(pi, v)| pi.contains(**v)).count();
    Ok(inside as f64 / y.len() as f64)
}

/// Mean width, optionally divided by an observation range.
pub fn mpiw(intervals: &[PredictionInterval], range: Option<f64>) -> Result<f64> {
    non_empty(intervals.len())?;
    let w = intervals.iter().map(PredictionInterval::width).sum::<f64>() / intervals.len() as f64;
    match range {
        None => Ok(w),
        Some(r) if r > 0.0 && r.is_finite() => Ok(w / r),
        Some(r) => Err(Error::DegenerateRange(format!("normalization range {r}"))),
    }
}

/// `max(y) - min(y)`.
pub fn value_range(y: &[f64]) -> Result<f64> {
    non_empty(y.len())?;
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(hi - lo)
}

/// Integer containment tally; merging is exact and order-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub inside: u64,
    pub total: u64,
}

impl Tally {
    pub fn add(&mut self, inside: bool) {
        self.inside += u64::from(inside);
        self.total += 1;
    }

    pub fn merge(self, o: Tally) -> Tally {
        Tally {
            inside: self.inside + o.inside,
            total: self.total + o.total,
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.inside as f64 / self.total as f64
        }
    }
}

/// Coverage of several values per interval. `realizations[r][i]` is the
/// value of sample `i` in run `r`.
pub fn containment_report(
    intervals: &[PredictionInterval],
    realizations: &[Vec<f64>],
    kind: ContainmentKind,
    pooling: Pooling,
    range: Option<f64>,
) -> Result<PIQualityReport> {
    non_empty(intervals.len())?;
    if realizations.is_empty() {
        return Err(Error::InsufficientData("no realizations".into()));
    }
    let mut runs = Vec::with_capacity(realizations.len());
    for run in realizations {
        if run.len() != intervals.len() {
            return Err(Error::Dimension {
                expected: intervals.len(),
                got: run.len(),
            });
        }
        let mut t = Tally::default();
        for (pi, v) in intervals.iter().zip(run) {
            t.add(pi.contains(*v));
        }
        runs.push(t);
    }
    Ok(PIQualityReport {
        picp: combine(&runs, pooling),
        mpiw_abs: mpiw(intervals, None)?,
        mpiw_norm: range.map(|r| mpiw(intervals, Some(r))).transpose()?,
        n_samples: runs.iter().map(|t| t.total as usize).sum(),
        kind,
    })
}

pub fn combine(runs: &[Tally], pooling: Pooling) -> f64 {
    match pooling {
        Pooling::Pooled => runs.iter().fold(Tally::default(), |a, b| a.merge(*b)).fraction(),
        Pooling::PerRun => runs.iter().map(Tally::fraction).sum::<f64>() / runs.len().max(1) as f64,
    }
}

pub const REPORT_HEADER: [&str; 7] = ["target", "method", "kind", "picp", "mpiw_abs", "mpiw_norm", "n"];

/// One CSV row of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub target: String,
    pub method: String,
    pub report: PIQualityReport,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(REPORT_HEADER)?;
        for r in rows {
            w.write_record([
                r.target.clone(),
                r.method.clone(),
                r.report.kind.name().to_string(),
                format!("{:.6}", r.report.picp),
                format!("{:.6e}", r.report.mpiw_abs),
                r.report.mpiw_norm.map_or(String::new(), |v| format!("{v:.6}")),
                r.report.n_samples.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_HEADER {
        return Err(Error::Schema(format!("unexpected report header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let kind: ContainmentKind = serde_json::from_str(&format!("\"{}\"", &rec[2]))
            .map_err(|_| Error::Schema(format!("unknown kind '{}'", &rec[2])))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Schema(format!("bad number '{s}'")));
        rows.push(ReportRow {
            target: rec[0].to_string(),
            method: rec[1].to_string(),
            report: PIQualityReport {
                picp: num(&rec[3])?,
                mpiw_abs: num(&rec[4])?,
                mpiw_norm: if rec[5].is_empty() { None } else { Some(num(&rec[5])?) },
                n_samples: rec[6].parse().map_err(|_| Error::Schema(format!("bad count '{}'", &rec[6])))?,
                kind,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(lower: f64, upper: f64) -> PredictionInterval {
        PredictionInterval {
            y_hat: 0.5 * (lower + upper),
            lower,
            upper,
            sigma2_model: None,
            sigma2_noise: None,
        }
    }

    #[test]
    fn picp_examples() {
        let b = vec![iv(0.0, 1.0); 4];
        assert_eq!(picp(&b, &[0.1, 0.5, 0.9, 0.2]).unwrap(), 1.0);
        assert_eq!(picp(&b[..2], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(picp(&b, &[0.5, 2.0, -1.0, 0.7]).unwrap(), 0.5);
        assert!(picp(&[], &[]).is_err());
    }

    #[test]
    fn mpiw_examples() {
        assert_eq!(mpiw(&[iv(0.0, 1.0), iv(0.0, 1.0)], None).unwrap(), 1.0);
        assert_eq!(mpiw(&[iv(0.0, 1.0), iv(0.0, 3.0)], None).unwrap(), 2.0);
        assert_eq!(mpiw(&[iv(0.0, 1.0), iv(0.0, 3.0)], Some(10.0)).unwrap(), 0.2);
        assert!(matches!(mpiw(&[iv(0.0, 1.0)], Some(0.0)), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn containment_single_realization_at_center() {
        let b = vec![iv(-1.0, 1.0), iv(2.0, 3.0)];
        let centers = vec![b.iter().map(|p| p.y_hat).collect::<Vec<_>>()];
        let r = containment_report(&b, &centers, ContainmentKind::ModelVariation, Pooling::Pooled, None).unwrap();
        assert_eq!(r.picp, 1.0);
        assert_eq!(r.n_samples, 2);
        assert!(containment_report(&b, &[], ContainmentKind::ModelVariation, Pooling::Pooled, None).is_err());
    }

    #[test]
    fn pooled_and_per_run_differ_only_with_unequal_runs() {
        let runs = [Tally { inside: 1, total: 1 }, Tally { inside: 0, total: 3 }];
        assert_eq!(combine(&runs, Pooling::Pooled), 0.25);
        assert_eq!(combine(&runs, Pooling::PerRun), 0.5);
    }

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![ReportRow {
            target: "Fx".into(),
            method: "bootstrap".into(),
            report: PIQualityReport {
                picp: 0.9724,
                mpiw_abs: 0.125,
                mpiw_norm: Some(0.03),
                n_samples: 800,
                kind: ContainmentKind::MeasurementVariation,
            },
        }];
        write_report_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("target,method,kind,picp,mpiw_abs,mpiw_norm,n\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_report_csv(&p).unwrap(), rows);
    }

    fn sets() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0, -6.0f64..6.0), 1..40)
    }

    proptest! {
        #[test]
        fn picp_shift_invariant(
            s in prop::collection::vec((-320i32..320, 0i32..192, -384i32..384), 1..40),
            k in -100i32..100,
        ) {
            // Dyadic grid values keep shifted comparisons exact.
            let g = |v: i32| f64::from(v) / 64.0;
            let k = f64::from(k);
            let b: Vec<_> = s.iter().map(|p| iv(g(p.0), g(p.0 + p.1))).collect();
            let y: Vec<f64> = s.iter().map(|p| g(p.2)).collect();
            let bs: Vec<_> = s.iter().map(|p| iv(g(p.0) + k, g(p.0 + p.1) + k)).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + k).collect();
            prop_assert_eq!(picp(&b, &y).unwrap(), picp(&bs, &ys).unwrap());
        }

        #[test]
        fn mpiw_ignores_y(s in sets()) {
            let b: Vec<_> = s.iter().map(|p| iv(p.0, p.0 + p.1)).collect();
            let w = mpiw(&b, None).unwrap();
            prop_assert!(w >= 0.0);
            let direct = s.iter().map(|p| (p.0 + p.1) - p.0).sum::<f64>() / s.len() as f64;
            prop_assert!((w - direct).abs() < 1e-12);
        }

        #[test]
        fn widening_never_lowers_picp(s in sets(), d in 0.0f64..2.0) {
            let b: Vec<_> = s.iter().map(|p| iv(p.0, p.0 + p.1)).collect();
            let wide: Vec<_> = s.iter().map(|p| iv(p.0 - d, p.0 + p.1 + d)).collect();
            let y: Vec<f64> = s.iter().map(|p| p.2).collect();
            prop_assert!(picp(&wide, &y).unwrap() >= picp(&b, &y).unwrap());
        }

        #[test]
        fn single_realization_equals_picp(s in sets()) {
            let b: Vec<_> = s.iter().map(|p| iv(p.0, p.0 + p.1)).collect();
            let y: Vec<f64> = s.iter().map(|p| p.2).collect();
            let r = containment_report(&b, std::slice::from_ref(&y), ContainmentKind::MeasurementVariation, Pooling::Pooled, None).unwrap();
            prop_assert_eq!(r.picp, picp(&b, &y).unwrap());
        }

        #[test]
        fn pooled_matches_double_loop(s in sets(), runs in prop::collection::vec(-6.0f64..6.0, 40 * 3)) {
            let b: Vec<_> = s.iter().map(|p| iv(p.0, p.0 + p.1)).collect();
            let n = b.len();
            let real: Vec<Vec<f64>> = (0..3).map(|r| runs[r * 40..r * 40 + n].to_vec()).collect();
            let rep = containment_report(&b, &real, ContainmentKind::ModelVariation, Pooling::Pooled, None).unwrap();
            let mut inside = 0;
            for run in &real {
                for i in 0..n {
                    if b[i].lower <= run[i] && run[i] <= b[i].upper { inside += 1; }
                }
            }
            prop_assert_eq!(rep.picp, inside as f64 / (3 * n) as f64);
        }
    }
}
