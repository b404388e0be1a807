//! Open-loop maneuver generator.
//!
//! Each excited axis follows `baseline + A sin(2 pi f t + phase)` (sinusoid)
//! or `baseline + A rect(t)` (pulse, a doublet). Rotor speeds come from a
//! trim map: equal rotors carry `m g / (cos phi cos theta)`, then the commanded
//! body rates add differential components. Heading integrates `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{QuadState, RotorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    /// Mass (kg).
    pub mass: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    pub geometry: RotorGeometry,
    /// Spin direction of rotor 1.
    pub s_r: i8,
    /// Differential rotor speed (rad/s) per unit commanded body rate (rad/s).
    pub mixer_gain: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Vehicle {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.mass > 0.0 && self.gravity > 0.0 && self.mixer_gain.is_finite()) {
            return Err(Error::InvalidSpec("vehicle mass, gravity and mixer gain must be valid".into()));
        }
        if self.s_r != 1 && self.s_r != -1 {
            return Err(Error::InvalidSpec(format!("s_r must be +/-1, got {}", self.s_r)));
        }
        Ok(())
    }

    /// Equal-rotor speed holding the weight at the given attitude.
    pub fn trim_speed(&self, phi: f64, theta: f64) -> f64 {
        (self.mass * self.gravity / (4.0 * self.geometry.kappa_0 * phi.cos() * theta.cos())).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    Sinusoid,
    Pulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    U,
    V,
    W,
    P,
    Q,
    R,
    Phi,
    Theta,
    OmegaCollective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisExcitation {
    pub axis: Axis,
    pub amplitude: f64,
    /// Hz; sinusoids only.
    #[serde(default)]
    pub frequency: f64,
    /// Radians. Drawn from the generation seed when absent.
    #[serde(default)]
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Baseline {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
    /// Offset added to the trim rotor speed (rad/s).
    pub omega_collective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverSpec {
    pub id: String,
    pub kind: ManeuverKind,
    pub axes: Vec<AxisExcitation>,
    pub duration: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default)]
    pub baseline: Baseline,
    /// Coupled maneuvers excite several axes at once; decoupled ones at most one.
    #[serde(default)]
    pub coupling: bool,
    /// Nominal airspeed band tag (m/s), if any.
    #[serde(default)]
    pub band: Option<f64>,
}

fn default_rate() -> f64 {
    100.0
}

impl ManeuverSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(format!("{}: {m}", self.id)));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return bad(format!("sample_rate must be positive, got {}", self.sample_rate));
        }
        if !self.coupling && self.axes.len() > 1 {
            return bad("decoupled maneuver excites more than one axis".into());
        }
        for (i, a) in self.axes.iter().enumerate() {
            if !a.amplitude.is_finite() || !a.frequency.is_finite() || a.phase.is_some_and(|p| !p.is_finite()) {
                return bad(format!("non-finite excitation on {:?}", a.axis));
            }
            if self.kind == ManeuverKind::Sinusoid && a.amplitude != 0.0 && !(a.frequency > 0.0) {
                return bad(format!("sinusoid on {:?} needs a positive frequency", a.axis));
            }
            if self.axes[..i].iter().any(|b| b.axis == a.axis) {
                return bad(format!("axis {:?} listed twice", a.axis));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

/// Doublet shape on `[0, T)`: +1 on `[0.2T, 0.35T)`, -1 on `[0.55T, 0.7T)`.
pub fn doublet(t: f64, duration: f64) -> f64 {
    let s = t / duration;
    if (0.2..0.35).contains(&s) {
        1.0
    } else if (0.55..0.7).contains(&s) {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub timestamps: Vec<f64>,
    pub states: Vec<QuadState>,
}

pub fn generate_states(spec: &ManeuverSpec, vehicle: &Vehicle, seed: u64) -> Result<Trajectory> {
    spec.validate()?;
    vehicle.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = spec
        .axes
        .iter()
        .map(|a| {
            let drawn = rng.random_range(0.0..std::f64::consts::TAU);
            a.phase.unwrap_or(drawn)
        })
        .collect();

    let n = spec.n_samples();
    let dt = 1.0 / spec.sample_rate;
    let k = vehicle.mixer_gain;
    let sr = f64::from(vehicle.s_r);
    let mut timestamps = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut psi = 0.0f64;

    for i in 0..n {
        let t = i as f64 * dt;
        let b = &spec.baseline;
        let mut vals = [b.u, b.v, b.w, b.p, b.q, b.r, b.phi, b.theta, b.omega_collective];
        for (a, phase) in spec.axes.iter().zip(&phases) {
            let shape = match spec.kind {
                ManeuverKind::Sinusoid => (std::f64::consts::TAU * a.frequency * t + phase).sin(),
                ManeuverKind::Pulse => doublet(t, spec.duration),
            };
            vals[a.axis as usize] += a.amplitude * shape;
        }
        let [u, v, w, p, q, r, phi, theta, coll] = vals;
        let half_pi = std::f64::consts::FRAC_PI_2;
        if phi.abs() >= half_pi || theta.abs() >= half_pi {
            return Err(Error::InvalidSpec(format!(
                "{}: attitude reaches phi={phi:.3}, theta={theta:.3} at t={t:.3}",
                spec.id
            )));
        }
        let base = vehicle.trim_speed(phi, theta) + coll;
        let omega = [
            base + k * (p + q + sr * r),
            base + k * (-p + q - sr * r),
            base + k * (-p - q + sr * r),
            base + k * (p - q - sr * r),
        ];
        if omega.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidSpec(format!("{}: negative rotor speed at t={t:.3}", spec.id)));
        }
        let state = QuadState {
            u,
            v,
            w,
            p,
            q,
            r,
            phi,
            theta,
            psi: wrap_angle(psi),
            omega,
            s_r: vehicle.s_r,
        };
        timestamps.push(t);
        states.push(state);
        psi += r * dt;
    }
    Ok(Trajectory { timestamps, states })
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w + tau
    } else {
        w
    }
}
