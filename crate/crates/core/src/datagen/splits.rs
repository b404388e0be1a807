//! Partitioning datasets into training/validation or velocity-band groups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

pub const IDENTIFICATION: &str = "identification";
pub const INTERPOLATION: &str = "interpolation";
pub const EXTRAPOLATION: &str = "extrapolation";
pub const TRAIN: &str = "train";
pub const VALIDATION: &str = "validation";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitPolicy {
    /// Datasets whose id is listed go to validation, all others to training.
    TrainValidation { validation: Vec<String> },
    /// Band-tagged datasets: bands listed under `interpolation` or
    /// `extrapolation` are held out, the remaining `bands` identify.
    VelocityBands {
        bands: Vec<f64>,
        interpolation: Vec<f64>,
        extrapolation: Vec<f64>,
    },
}

impl SplitPolicy {
    pub fn standard_bands() -> Self {
        SplitPolicy::VelocityBands {
            bands: vec![0.0, 5.0, 8.0, 10.0, 14.0],
            interpolation: vec![8.0],
            extrapolation: vec![14.0],
        }
    }
}

/// Named, disjoint partitions of the input datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub partitions: BTreeMap<String, Vec<Dataset>>,
}

impl Splits {
    pub fn get(&self, name: &str) -> &[Dataset] {
        self.partitions.get(name).map_or(&[], Vec::as_slice)
    }
}

fn same_band(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

pub fn make_splits(datasets: Vec<Dataset>, policy: &SplitPolicy) -> Result<Splits> {
    if datasets.is_empty() {
        return Err(Error::InvalidPolicy("no datasets to split".into()));
    }
    let mut ids: Vec<&str> = datasets.iter().map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidPolicy("duplicate dataset ids".into()));
    }

    let mut partitions: BTreeMap<String, Vec<Dataset>> = BTreeMap::new();
    let names: Vec<&str> = match policy {
        SplitPolicy::TrainValidation { validation } => {
            for v in validation {
                if !datasets.iter().any(|d| &d.id == v) {
                    return Err(Error::InvalidPolicy(format!("validation dataset '{v}' not found")));
                }
            }
            for d in datasets {
                let key = if validation.contains(&d.id) { VALIDATION } else { TRAIN };
                partitions.entry(key.into()).or_default().push(d);
            }
            vec![TRAIN, VALIDATION]
        }
        SplitPolicy::VelocityBands {
            bands,
            interpolation,
            extrapolation,
        } => {
            for h in interpolation.iter().chain(extrapolation) {
                if !bands.iter().any(|b| same_band(*b, *h)) {
                    return Err(Error::InvalidPolicy(format!("held-out band {h} is not among {bands:?}")));
                }
            }
            for d in datasets {
                let band = d
                    .band
                    .ok_or_else(|| Error::InvalidPolicy(format!("dataset '{}' has no band tag", d.id)))?;
                if !bands.iter().any(|b| same_band(*b, band)) {
                    return Err(Error::InvalidPolicy(format!("dataset '{}' band {band} not in {bands:?}", d.id)));
                }
                let key = if interpolation.iter().any(|b| same_band(*b, band)) {
                    INTERPOLATION
                } else if extrapolation.iter().any(|b| same_band(*b, band)) {
                    EXTRAPOLATION
                } else {
                    IDENTIFICATION
                };
                partitions.entry(key.into()).or_default().push(d);
            }
            let mut n = vec![IDENTIFICATION];
            if !interpolation.is_empty() {
                n.push(INTERPOLATION);
            }
            if !extrapolation.is_empty() {
                n.push(EXTRAPOLATION);
            }
            n
        }
    };
    for name in names {
        if partitions.get(name).is_none_or(Vec::is_empty) {
            return Err(Error::InvalidPolicy(format!("partition '{name}' is empty")));
        }
    }
    Ok(Splits { partitions })
}
