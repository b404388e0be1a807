//! Gaussian contamination of raw states and measurements.
//!
//! Noise goes onto the raw states (rotor speeds, velocities, attitude, rates)
//! and the features are then rebuilt from the noisy states, so derived
//! quantities such as `omega_avg`, `U_*` and `mu_*` inherit it the way they
//! would from real sensors. Force targets get acceleration noise scaled by
//! the vehicle mass; moment targets get their own per-axis noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::maneuver::Vehicle;
use crate::error::{Error, Result};
use crate::features::{build_feature_vector, QuadState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    #[serde(default)]
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn new(mean: f64, std: f64) -> Self {
        Gaussian { mean, std }
    }

    pub fn sample(&self, z: f64) -> f64 {
        self.mean + self.std * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Rotor-speed noise in electrical RPM.
    pub rotor_speed_erpm: Gaussian,
    /// Electrical-to-mechanical RPM ratio. Motors report eRPM, and the
    /// mechanical speed is eRPM divided by this factor.
    pub erpm_per_rpm: f64,
    pub u: Gaussian,
    pub v: Gaussian,
    pub w: Gaussian,
    pub a_x: Gaussian,
    pub a_y: Gaussian,
    pub a_z: Gaussian,
    pub phi: Gaussian,
    pub theta: Gaussian,
    pub psi: Gaussian,
    pub p: Gaussian,
    pub q: Gaussian,
    pub r: Gaussian,
    /// Measurement noise on `Mx`, `My`, `Mz` (N m).
    pub moments: [Gaussian; 3],
}

impl NoiseSpec {
    pub fn zero() -> Self {
        let z = Gaussian::default();
        NoiseSpec {
            rotor_speed_erpm: z,
            erpm_per_rpm: 12.0,
            u: z,
            v: z,
            w: z,
            a_x: z,
            a_y: z,
            a_z: z,
            phi: z,
            theta: z,
            psi: z,
            p: z,
            q: z,
            r: z,
            moments: [z; 3],
        }
    }

    /// rad/s per eRPM.
    pub fn erpm_to_rad_s(&self) -> f64 {
        std::f64::consts::TAU / 60.0 / self.erpm_per_rpm
    }

    pub fn rotor_speed_rad_s(&self) -> Gaussian {
        let k = self.erpm_to_rad_s();
        Gaussian::new(self.rotor_speed_erpm.mean * k, self.rotor_speed_erpm.std * k)
    }

    /// Measurement noise per target; forces are `mass * a`.
    pub fn measurement(&self, mass: f64) -> [Gaussian; 6] {
        let f = |g: Gaussian| Gaussian::new(mass * g.mean, mass * g.std);
        [
            f(self.a_x),
            f(self.a_y),
            f(self.a_z),
            self.moments[0],
            self.moments[1],
            self.moments[2],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rotor_speed_erpm,
            self.u,
            self.v,
            self.w,
            self.a_x,
            self.a_y,
            self.a_z,
            self.phi,
            self.theta,
            self.psi,
            self.p,
            self.q,
            self.r,
            self.moments[0],
            self.moments[1],
            self.moments[2],
        ];
        if all.iter().any(|g| !(g.std >= 0.0) || !g.mean.is_finite() || !g.std.is_finite()) {
            return Err(Error::InvalidInput("noise std must be finite and >= 0".into()));
        }
        if !(self.erpm_per_rpm > 0.0 && self.erpm_per_rpm.is_finite()) {
            return Err(Error::InvalidInput(format!("erpm_per_rpm must be positive, got {}", self.erpm_per_rpm)));
        }
        Ok(())
    }
}

/// Number of standard normals drawn per sample: 13 state channels + 6 targets.
pub const DRAWS_PER_SAMPLE: usize = 19;

/// Perturbs one raw state with the given standard-normal draws (13 values).
pub fn perturb_state(s: &QuadState, noise: &NoiseSpec, z: &[f64]) -> QuadState {
    let om = noise.rotor_speed_rad_s();
    QuadState {
        omega: [
            s.omega[0] + om.sample(z[0]),
            s.omega[1] + om.sample(z[1]),
            s.omega[2] + om.sample(z[2]),
            s.omega[3] + om.sample(z[3]),
        ],
        u: s.u + noise.u.sample(z[4]),
        v: s.v + noise.v.sample(z[5]),
        w: s.w + noise.w.sample(z[6]),
        phi: s.phi + noise.phi.sample(z[7]),
        theta: s.theta + noise.theta.sample(z[8]),
        psi: s.psi + noise.psi.sample(z[9]),
        p: s.p + noise.p.sample(z[10]),
        q: s.q + noise.q.sample(z[11]),
        r: s.r + noise.r.sample(z[12]),
        s_r: s.s_r,
    }
}

/// Returns a noisy copy of `ds`. Standard normals are always drawn, so the
/// random stream does not depend on which channels have zero std.
pub fn inject_noise(ds: &Dataset, noise: &NoiseSpec, vehicle: &Vehicle, seed: u64) -> Result<Dataset> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let meas = noise.measurement(vehicle.mass);
    let mut out = ds.clone();
    let mut z = [0.0f64; DRAWS_PER_SAMPLE];
    for i in 0..ds.len() {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let mut s = perturb_state(&ds.states[i], noise, &z[..13]);
        // Keep rotor speeds physical under large noise.
        for w in s.omega.iter_mut() {
            *w = w.max(0.0);
        }
        out.features[i] = build_feature_vector(&s, &vehicle.geometry)?;
        out.states[i] = s;
        for (k, g) in meas.iter().enumerate() {
            out.targets[i][k] = ds.targets[i][k] + g.sample(z[13 + k]);
        }
    }
    out.provenance.noise_seed = Some(seed);
    Ok(out)
}
