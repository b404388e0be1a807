//! Shipped configuration documents, embedded at compile time.
//!
//! A reference is either a preset name (`sim`, `sim-sensors`, `sim-training`) or a
//! path to a TOML file. Anything containing a path separator or ending in
//! `.toml` is read from disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::datagen::truth::TruthFile;
use crate::datagen::{ManeuverSet, NoiseSpec, TruthModelSet, Vehicle};
use crate::error::{Error, Result};
use crate::pi::AnnInputs;
use crate::polyreg::{PolynomialModel, Term};
use crate::target::Target;

const VEHICLE_SIM: &str = include_str!("../presets/vehicle-sim.toml");
const NOISE_SIM_SENSORS: &str = include_str!("../presets/noise-sim-sensors.toml");
const TRUTH_SIM: &str = include_str!("../presets/truth-sim.toml");
const POOLS: &str = include_str!("../presets/pools.toml");
const ANN_INPUTS: &str = include_str!("../presets/ann-inputs.toml");
const HDBEETLE: &str = include_str!("../presets/hdbeetle-structures.toml");
const SIM_TRAINING: &str = include_str!("../presets/maneuvers-sim-training.toml");
const SIM_VALIDATION: &str = include_str!("../presets/maneuvers-sim-validation.toml");
const BANDS: &str = include_str!("../presets/maneuvers-bands.toml");

fn is_path(reference: &str) -> bool {
    reference.contains('/') || reference.contains('\\') || reference.ends_with(".toml")
}

fn read(path: &str) -> Result<String> {
    std::fs::read_to_string(Path::new(path)).map_err(|e| Error::io(path, e))
}

fn embedded(kind: &str, name: &str) -> Result<&'static str> {
    let text = match (kind, name) {
        ("vehicle", "sim") => VEHICLE_SIM,
        ("noise", "sim-sensors") => NOISE_SIM_SENSORS,
        ("noise", "none") => "",
        ("truth", "sim") => TRUTH_SIM,
        ("maneuvers", "sim-training") => SIM_TRAINING,
        ("maneuvers", "sim-validation") => SIM_VALIDATION,
        ("maneuvers", "bands") => BANDS,
        _ => return Err(Error::Schema(format!("unknown {kind} preset '{name}'"))),
    };
    Ok(text)
}

fn source(kind: &str, reference: &str) -> Result<String> {
    if is_path(reference) {
        read(reference)
    } else {
        embedded(kind, reference).map(str::to_string)
    }
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

pub fn vehicle(reference: &str) -> Result<Vehicle> {
    let v: Vehicle = parse(reference, &source("vehicle", reference)?)?;
    v.validate()?;
    Ok(v)
}

/// `none` gives the all-zero noise model.
pub fn noise(reference: &str) -> Result<NoiseSpec> {
    if reference == "none" {
        return Ok(NoiseSpec::zero());
    }
    let n: NoiseSpec = parse(reference, &source("noise", reference)?)?;
    n.validate()?;
    Ok(n)
}

pub fn truth(reference: &str) -> Result<TruthModelSet> {
    TruthModelSet::from_toml(&source("truth", reference)?)
}

pub fn maneuvers(reference: &str) -> Result<ManeuverSet> {
    ManeuverSet::from_toml(&source("maneuvers", reference)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    pools: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InputFile {
    inputs: BTreeMap<String, Vec<String>>,
}

/// Preset key for a model family and target, e.g. `sim-fx`.
pub fn family_key(family: &str, target: Target) -> String {
    format!("{family}-{}", target.name().to_lowercase())
}

/// Candidate pool expression shipped under `name` (e.g. `sim-fz`).
pub fn pool(name: &str) -> Result<String> {
    let file: PoolFile = parse("pools", POOLS)?;
    file.pools
        .get(name)
        .cloned()
        .ok_or_else(|| Error::Schema(format!("unknown pool preset '{name}'")))
}

pub fn pool_names() -> Result<Vec<String>> {
    let file: PoolFile = parse("pools", POOLS)?;
    Ok(file.pools.into_keys().collect())
}

/// Network input vector shipped under `name`.
pub fn ann_inputs(name: &str) -> Result<AnnInputs> {
    let file: InputFile = parse("ann inputs", ANN_INPUTS)?;
    let names = file
        .inputs
        .get(name)
        .ok_or_else(|| Error::Schema(format!("unknown ANN input preset '{name}'")))?;
    AnnInputs::parse(names)
}

/// Identified flight-data models for the longitudinal axes (Fx, Fz, My).
pub fn hdbeetle_models() -> Result<Vec<PolynomialModel>> {
    let file: TruthFile = parse("hdbeetle structures", HDBEETLE)?;
    file.model
        .into_iter()
        .map(|doc| {
            let terms: Vec<Term> = doc.terms.iter().map(|t| Term::parse(&t.term)).collect::<Result<_>>()?;
            let coefficients = doc.terms.iter().map(|t| t.coefficient).collect();
            let mut m = PolynomialModel::fixed(doc.target.name(), terms, coefficients)?;
            m.n_fixed = doc.terms.iter().take_while(|t| t.fixed).count();
            Ok(m)
        })
        .collect()
}
