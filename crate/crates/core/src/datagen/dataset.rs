//! Datasets and their CSV form.
//!
//! One CSV per maneuver: `timestamp`, 13 raw-state channels, the 19 features
//! (prefixed `feat_` so names stay unique) and the six targets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, FeatureVector, QuadState, N_FEATURES};
use crate::target::Target;

pub const RAW_COLUMNS: [&str; 13] = [
    "u", "v", "w", "p", "q", "r", "phi", "theta", "psi", "omega_1", "omega_2", "omega_3", "omega_4",
];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub maneuver_ids: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    /// Nominal airspeed band (m/s) for band-tagged data.
    pub band: Option<f64>,
    pub timestamps: Vec<f64>,
    pub states: Vec<QuadState>,
    pub features: Vec<FeatureVector>,
    pub targets: Vec<[f64; 6]>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn target(&self, t: Target) -> Vec<f64> {
        self.targets.iter().map(|y| y[t.index()]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        for (name, len) in [
            ("states", self.states.len()),
            ("features", self.features.len()),
            ("targets", self.targets.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInput(format!(
                    "dataset {}: {name} has {len} rows, timestamps {n}",
                    self.id
                )));
            }
        }
        let finite = self.timestamps.iter().all(|v| v.is_finite())
            && self.features.iter().all(|f| f.0.iter().all(|v| v.is_finite()))
            && self.targets.iter().all(|y| y.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidInput(format!("dataset {}: non-finite entry", self.id)));
        }
        Ok(())
    }

    /// Row-wise concatenation; provenance ids are merged.
    pub fn concat(id: &str, parts: &[Dataset]) -> Dataset {
        let mut out = Dataset {
            id: id.to_string(),
            band: None,
            timestamps: Vec::new(),
            states: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
            provenance: Provenance::default(),
        };
        for d in parts {
            out.timestamps.extend_from_slice(&d.timestamps);
            out.states.extend_from_slice(&d.states);
            out.features.extend_from_slice(&d.features);
            out.targets.extend_from_slice(&d.targets);
            out.provenance.maneuver_ids.extend(d.provenance.maneuver_ids.iter().cloned());
        }
        if let Some(first) = parts.first() {
            out.provenance.seed = first.provenance.seed;
            if parts.iter().all(|d| d.band == first.band) {
                out.band = first.band;
            }
        }
        out
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            id: self.id.clone(),
            band: self.band,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            states: idx.iter().map(|&i| self.states[i]).collect(),
            features: idx.iter().map(|&i| self.features[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn header() -> Vec<String> {
        let mut h = vec!["timestamp".to_string()];
        h.extend(RAW_COLUMNS.iter().map(|s| s.to_string()));
        h.extend(Feature::ALL.iter().map(|f| format!("feat_{}", f.name())));
        h.extend(Target::ALL.iter().map(|t| t.name().to_string()));
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        w.write_record(Self::header())?;
        for i in 0..self.len() {
            let s = &self.states[i];
            let mut row: Vec<String> = Vec::with_capacity(39);
            row.push(self.timestamps[i].to_string());
            for v in [s.u, s.v, s.w, s.p, s.q, s.r, s.phi, s.theta, s.psi] {
                row.push(v.to_string());
            }
            row.extend(s.omega.iter().map(|v| v.to_string()));
            row.extend(self.features[i].0.iter().map(|v| v.to_string()));
            row.extend(self.targets[i].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_csv`]. The spin sign is not
    /// stored per row and must be supplied.
    pub fn read_csv(path: &Path, id: &str, s_r: i8) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new().from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != Self::header() {
            return Err(Error::Schema(format!("{}: unexpected CSV header", path.display())));
        }
        let mut ds = Dataset {
            id: id.to_string(),
            band: None,
            timestamps: Vec::new(),
            states: Vec::new(),
            features: Vec::new(),
            targets: Vec::new(),
            provenance: Provenance::default(),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Schema(format!("{} row {}: {e}", path.display(), line + 2)))?;
            if vals.len() != 1 + 13 + N_FEATURES + 6 {
                return Err(Error::Schema(format!("{} row {}: wrong column count", path.display(), line + 2)));
            }
            ds.timestamps.push(vals[0]);
            let v = &vals[1..14];
            ds.states.push(QuadState {
                u: v[0],
                v: v[1],
                w: v[2],
                p: v[3],
                q: v[4],
                r: v[5],
                phi: v[6],
                theta: v[7],
                psi: v[8],
                omega: [v[9], v[10], v[11], v[12]],
                s_r,
            });
            let mut f = [0.0; N_FEATURES];
            f.copy_from_slice(&vals[14..14 + N_FEATURES]);
            ds.features.push(FeatureVector(f));
            let mut y = [0.0; 6];
            y.copy_from_slice(&vals[14 + N_FEATURES..]);
            ds.targets.push(y);
        }
        ds.validate()?;
        Ok(ds)
    }
}
