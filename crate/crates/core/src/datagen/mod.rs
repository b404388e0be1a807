//! Synthetic flight data: maneuvers, ground-truth measurements, noise and
//! dataset partitioning.

pub mod dataset;
pub mod maneuver;
pub mod noise;
pub mod splits;
pub mod truth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Provenance};
pub use maneuver::{generate_states, Axis, AxisExcitation, Baseline, ManeuverKind, ManeuverSpec, Trajectory, Vehicle};
pub use noise::{inject_noise, Gaussian, NoiseSpec};
pub use splits::{make_splits, SplitPolicy, Splits};
pub use truth::{evaluate_truth, TruthModelSet};

use crate::error::{Error, Result};
use crate::features::build_feature_vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverSet {
    pub name: String,
    pub maneuver: Vec<ManeuverSpec>,
}

impl ManeuverSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        let set: ManeuverSet = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        for m in &set.maneuver {
            m.validate()?;
        }
        Ok(set)
    }
}

/// Seed for item `index` of a family rooted at `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise-free dataset for one maneuver.
pub fn generate_dataset(spec: &ManeuverSpec, vehicle: &Vehicle, truth: &TruthModelSet, seed: u64) -> Result<Dataset> {
    let tr = generate_states(spec, vehicle, seed)?;
    let features = tr
        .states
        .iter()
        .map(|s| build_feature_vector(s, &vehicle.geometry))
        .collect::<Result<Vec<_>>>()?;
    let targets = features.iter().map(|x| evaluate_truth(truth, x)).collect();
    let ds = Dataset {
        id: spec.id.clone(),
        band: spec.band,
        timestamps: tr.timestamps,
        states: tr.states,
        features,
        targets,
        provenance: Provenance {
            maneuver_ids: vec![spec.id.clone()],
            seed,
            noise_seed: None,
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// Generates every maneuver of a set; maneuver `i` uses `derive_seed(seed, i)`.
pub fn generate_set(set: &ManeuverSet, vehicle: &Vehicle, truth: &TruthModelSet, seed: u64) -> Result<Vec<Dataset>> {
    set.maneuver
        .par_iter()
        .enumerate()
        .map(|(i, m)| generate_dataset(m, vehicle, truth, derive_seed(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, FeatureVector, RotorGeometry};
    use crate::target::Target;

    const TRUTH: &str = include_str!("../../presets/truth-sim.toml");

    fn vehicle() -> Vehicle {
        Vehicle {
            mass: 0.4,
            gravity: 9.81,
            geometry: RotorGeometry {
                radius: 0.075,
                v_h: 4.0,
                kappa_0: 1.35e-3,
            },
            s_r: 1,
            mixer_gain: 1.0,
        }
    }

    fn sensor_noise() -> NoiseSpec {
        let g = |s| Gaussian::new(0.0, s);
        NoiseSpec {
            rotor_speed_erpm: g(5.0),
            erpm_per_rpm: 12.0,
            u: g(0.03),
            v: g(0.03),
            w: g(0.03),
            a_x: g(0.03),
            a_y: g(0.03),
            a_z: g(0.03),
            phi: g(0.01),
            theta: g(0.01),
            psi: g(0.01),
            p: g(0.01),
            q: g(0.01),
            r: g(0.01),
            moments: [g(9.24e-4); 3],
        }
    }

    fn coupled(id: &str, band: Option<f64>) -> ManeuverSpec {
        ManeuverSpec {
            id: id.into(),
            kind: ManeuverKind::Sinusoid,
            axes: vec![
                AxisExcitation { axis: Axis::U, amplitude: 2.0, frequency: 0.2, phase: None },
                AxisExcitation { axis: Axis::Q, amplitude: 1.0, frequency: 0.5, phase: None },
                AxisExcitation { axis: Axis::W, amplitude: 1.0, frequency: 0.3, phase: None },
            ],
            duration: 5.0,
            sample_rate: 100.0,
            baseline: Baseline { u: band.unwrap_or(0.0), ..Baseline::default() },
            coupling: true,
            band,
        }
    }

    #[test]
    fn truth_bias_and_hand_sums() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let zero = FeatureVector::zeros();
        assert_eq!(evaluate_truth(&truth, &zero)[Target::Fx.index()], -1.431e-04);
        let mut x = FeatureVector::zeros();
        x.set(Feature::MuX, 1.0);
        assert_eq!(evaluate_truth(&truth, &x)[Target::Fx.index()], -1.431e-04 + -2.498e-01);
        let mut x = FeatureVector::zeros();
        x.set(Feature::UP, 1.0);
        assert_eq!(evaluate_truth(&truth, &x)[Target::Mx.index()], -3.838e-05 + 2.938e-04);
        assert_eq!(truth.model(Target::Fz).n_fixed, 3);
        assert_eq!(truth.model(Target::Fx).terms[2].canonical(), "mu_x^1*mu_z^1");
    }

    #[test]
    fn truth_is_linear_in_coefficients() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let ds = generate_dataset(&coupled("c", None), &vehicle(), &truth, 1).unwrap();
        let double = truth.scaled(2.0);
        for x in ds.features.iter().step_by(41) {
            let a = evaluate_truth(&truth, x);
            let b = evaluate_truth(&double, x);
            for k in 0..6 {
                assert!((2.0 * a[k] - b[k]).abs() <= 1e-12 * b[k].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn truth_schema_errors() {
        assert!(matches!(TruthModelSet::from_toml("model = []"), Err(Error::Schema(_))));
        let extra = TRUTH.replacen("target = \"Fx\"", "target = \"Fx\"\nbogus = 1", 1);
        assert!(matches!(TruthModelSet::from_toml(&extra), Err(Error::Schema(_))));
    }

    #[test]
    fn zero_noise_is_identity_and_regeneration_is_bit_identical() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let ds = generate_dataset(&coupled("c", None), &vehicle(), &truth, 1).unwrap();
        let again = generate_dataset(&coupled("c", None), &vehicle(), &truth, 1).unwrap();
        assert_eq!(ds, again);
        let noisy = inject_noise(&ds, &NoiseSpec::zero(), &vehicle(), 9).unwrap();
        assert_eq!(noisy.states, ds.states);
        assert_eq!(noisy.features, ds.features);
        assert_eq!(noisy.targets, ds.targets);
    }

    #[test]
    fn noise_statistics_and_recomputed_features() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let mut spec = coupled("c", None);
        spec.duration = 1000.0;
        let ds = generate_dataset(&spec, &vehicle(), &truth, 1).unwrap();
        assert_eq!(ds.len(), 100_000);
        let noise = sensor_noise();
        let noisy = inject_noise(&ds, &noise, &vehicle(), 42).unwrap();
        let d: Vec<f64> = ds.states.iter().zip(&noisy.states).map(|(a, b)| b.u - a.u).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((sd / 0.03 - 1.0).abs() < 0.02, "sd = {sd}");
        // Rotor speed std: 5 eRPM at 12 eRPM per mechanical RPM.
        let dw: Vec<f64> = ds.states.iter().zip(&noisy.states).map(|(a, b)| b.omega[2] - a.omega[2]).collect();
        let sw = (dw.iter().map(|x| x * x).sum::<f64>() / dw.len() as f64).sqrt();
        let expected = 5.0 / 12.0 * std::f64::consts::TAU / 60.0;
        assert!((sw / expected - 1.0).abs() < 0.02);
        // Derived features come from the noisy states, never the clean ones.
        for (c, n) in ds.features.iter().zip(&noisy.features).take(1000) {
            for f in [Feature::OmegaAvg, Feature::UP, Feature::UQ, Feature::UR, Feature::MuX, Feature::SinPhi, Feature::VIn] {
                assert_ne!(c[f], n[f]);
            }
        }
        let target_sd = {
            let e: Vec<f64> = ds.targets.iter().zip(&noisy.targets).map(|(a, b)| b[0] - a[0]).collect();
            (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
        };
        assert!((target_sd / (0.4 * 0.03) - 1.0).abs() < 0.02);
    }

    #[test]
    fn different_seeds_differ() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let ds = generate_dataset(&coupled("c", None), &vehicle(), &truth, 1).unwrap();
        let a = inject_noise(&ds, &sensor_noise(), &vehicle(), 1).unwrap();
        let b = inject_noise(&ds, &sensor_noise(), &vehicle(), 2).unwrap();
        assert_ne!(a.features, b.features);
        assert_ne!(a.targets, b.targets);
        let a2 = inject_noise(&ds, &sensor_noise(), &vehicle(), 1).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn csv_round_trip() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let ds = generate_dataset(&coupled("c", None), &vehicle(), &truth, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        ds.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next().unwrap().split(',').count(), 39);
        let back = Dataset::read_csv(&path, "c", 1).unwrap();
        assert_eq!(back.states, ds.states);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.targets, ds.targets);
        assert_eq!(back.timestamps, ds.timestamps);
    }

    #[test]
    fn train_validation_split() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let a = generate_dataset(&coupled("a", None), &vehicle(), &truth, 1).unwrap();
        let b = generate_dataset(&coupled("b", None), &vehicle(), &truth, 2).unwrap();
        let s = make_splits(vec![a, b], &SplitPolicy::TrainValidation { validation: vec!["b".into()] }).unwrap();
        assert_eq!(s.get(splits::TRAIN).len(), 1);
        assert_eq!(s.get(splits::VALIDATION)[0].id, "b");
        let a = generate_dataset(&coupled("a", None), &vehicle(), &truth, 1).unwrap();
        assert!(matches!(
            make_splits(vec![a], &SplitPolicy::TrainValidation { validation: vec![] }),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn band_split() {
        let truth = TruthModelSet::from_toml(TRUTH).unwrap();
        let sets: Vec<Dataset> = [0.0, 5.0, 8.0, 10.0, 14.0]
            .iter()
            .map(|b| generate_dataset(&coupled(&format!("band{b}"), Some(*b)), &vehicle(), &truth, 3).unwrap())
            .collect();
        let ids: Vec<String> = sets.iter().map(|d| d.id.clone()).collect();
        let s = make_splits(sets, &SplitPolicy::standard_bands()).unwrap();
        let ident: Vec<f64> = s.get(splits::IDENTIFICATION).iter().map(|d| d.band.unwrap()).collect();
        assert_eq!(ident, vec![0.0, 5.0, 10.0]);
        assert_eq!(s.get(splits::INTERPOLATION)[0].band, Some(8.0));
        assert_eq!(s.get(splits::EXTRAPOLATION)[0].band, Some(14.0));
        let mut union: Vec<String> = s.partitions.values().flatten().map(|d| d.id.clone()).collect();
        union.sort();
        let mut want = ids;
        want.sort();
        assert_eq!(union, want);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        let mut s = seeds.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), seeds.len());
    }
}
