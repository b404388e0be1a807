//! Model input features derived from raw quadrotor states.
//!
//! The 19-entry vector mixes body velocities, rates, attitude trigonometry,
//! rotor-speed aggregates and advance ratios. The induced velocity enters
//! through an implicit momentum-theory relation that is solved numerically.
//!
//! Note on `mu_vin`: the published definition prints `w / (omega_avg R)` for
//! this entry, which would duplicate `mu_z`. That is treated as a typo and
//! `mu_vin = v_in / (omega_avg R)` is used instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard on the rotor tip speed `omega_avg * R` (m/s) below which advance
/// ratios are undefined.
pub const TIP_SPEED_EPS: f64 = 1e-6;

pub const N_FEATURES: usize = 19;

/// Named entries of the feature vector, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    U,
    V,
    W,
    VIn,
    P,
    Q,
    R,
    OmegaAvg,
    SinPhi,
    CosPhi,
    SinTheta,
    CosTheta,
    UP,
    UQ,
    UR,
    MuX,
    MuY,
    MuZ,
    MuVin,
}

impl Feature {
    pub const ALL: [Feature; N_FEATURES] = [
        Feature::U,
        Feature::V,
        Feature::W,
        Feature::VIn,
        Feature::P,
        Feature::Q,
        Feature::R,
        Feature::OmegaAvg,
        Feature::SinPhi,
        Feature::CosPhi,
        Feature::SinTheta,
        Feature::CosTheta,
        Feature::UP,
        Feature::UQ,
        Feature::UR,
        Feature::MuX,
        Feature::MuY,
        Feature::MuZ,
        Feature::MuVin,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::U => "u",
            Feature::V => "v",
            Feature::W => "w",
            Feature::VIn => "v_in",
            Feature::P => "p",
            Feature::Q => "q",
            Feature::R => "r",
            Feature::OmegaAvg => "omega_avg",
            Feature::SinPhi => "sin_phi",
            Feature::CosPhi => "cos_phi",
            Feature::SinTheta => "sin_theta",
            Feature::CosTheta => "cos_theta",
            Feature::UP => "U_p",
            Feature::UQ => "U_q",
            Feature::UR => "U_r",
            Feature::MuX => "mu_x",
            Feature::MuY => "mu_y",
            Feature::MuZ => "mu_z",
            Feature::MuVin => "mu_vin",
        }
    }

    /// Looks a feature up by its canonical name. A few common aliases
    /// (`omega`, `Up`, `mu_v_in`) are accepted as well.
    pub fn from_name(name: &str) -> Option<Feature> {
        if let Some(f) = Feature::ALL.iter().find(|f| f.name() == name) {
            return Some(*f);
        }
        match name {
            "omega" | "w_avg" => Some(Feature::OmegaAvg),
            "Up" | "u_p" => Some(Feature::UP),
            "Uq" | "u_q" => Some(Feature::UQ),
            "Ur" | "u_r" => Some(Feature::UR),
            "mu_v_in" | "mu_vi" => Some(Feature::MuVin),
            "vin" | "v_i" => Some(Feature::VIn),
            _ => None,
        }
    }
}

impl std::fmt::Display for Feature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw kinematic and actuator state at one time sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    /// Rotor angular speeds in rad/s.
    pub omega: [f64; 4],
    /// Spin direction of rotor 1, either -1 or +1.
    pub s_r: i8,
}

impl QuadState {
    pub fn hover(omega: f64, s_r: i8) -> Self {
        QuadState {
            u: 0.0,
            v: 0.0,
            w: 0.0,
            p: 0.0,
            q: 0.0,
            r: 0.0,
            phi: 0.0,
            theta: 0.0,
            psi: 0.0,
            omega: [omega; 4],
            s_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.u, self.v, self.w, self.p, self.q, self.r, self.phi, self.theta, self.psi,
        ];
        if scalars.iter().chain(self.omega.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite state entry".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.phi.abs() >= half_pi || self.theta.abs() >= half_pi {
            return Err(Error::InvalidInput(format!(
                "attitude out of range: phi={}, theta={}",
                self.phi, self.theta
            )));
        }
        if self.omega.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidInput("negative rotor speed".into()));
        }
        check_spin(self.s_r)
    }

    pub fn airspeed(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    /// Angle between the body velocity and the rotor plane, positive in climb
    /// (negative `w`).
    pub fn rotor_angle_of_attack(&self) -> f64 {
        (-self.w).atan2(self.u.hypot(self.v))
    }
}

/// Per-vehicle rotor constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorGeometry {
    /// Rotor radius (m).
    pub radius: f64,
    /// Hover induced velocity (m/s).
    pub v_h: f64,
    /// Thrust constant (N s^2).
    pub kappa_0: f64,
}

impl RotorGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("radius", self.radius), ("v_h", self.v_h), ("kappa_0", self.kappa_0)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: Feature, value: f64) {
        self.0[f.index()] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn zeros() -> Self {
        FeatureVector([0.0; N_FEATURES])
    }
}

impl std::ops::Index<Feature> for FeatureVector {
    type Output = f64;
    fn index(&self, f: Feature) -> &f64 {
        &self.0[f.index()]
    }
}

fn check_spin(s_r: i8) -> Result<()> {
    if s_r == 1 || s_r == -1 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("spin sign must be -1 or +1, got {s_r}")))
    }
}

/// Root-mean-square rotor speed.
pub fn avg_rotor_speed(omega: &[f64; 4]) -> Result<f64> {
    if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(format!("rotor speeds must be finite and >= 0: {omega:?}")));
    }
    Ok((omega.iter().map(|w| w * w).sum::<f64>() / 4.0).sqrt())
}

/// Control rolling, pitching and yawing moment proxies `(U_p, U_q, U_r)`.
pub fn control_moments(omega: &[f64; 4], s_r: i8) -> Result<(f64, f64, f64)> {
    check_spin(s_r)?;
    let [w1, w2, w3, w4] = *omega;
    let u_p = (w1 + w4) - (w2 + w3);
    let u_q = (w1 + w2) - (w3 + w4);
    let u_r = f64::from(s_r) * ((w1 + w3) - (w2 + w4));
    Ok((u_p, u_q, u_r))
}

/// Settings for [`induced_velocity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowSolver {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for InflowSolver {
    fn default() -> Self {
        InflowSolver {
            tol: 1e-9,
            max_iter: 200,
            damping: 0.5,
        }
    }
}

fn inflow_rhs(v_in: f64, v_cos: f64, v_sin: f64, v_h: f64) -> f64 {
    v_h * v_h / v_cos.hypot(v_in - v_sin)
}

/// Solves `v_in = v_h^2 / sqrt((V cos a)^2 + (v_in - V sin a)^2)` for the
/// induced velocity.
///
/// Damped fixed-point iteration from `v_h` is tried first. If it stalls or
/// oscillates, bisection on `[1e-6, v_h + V]` takes over; the residual
/// `v - rhs(v)` changes sign on that bracket for every admissible input.
pub fn induced_velocity(
    airspeed: f64,
    alpha_r: f64,
    v_h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    induced_velocity_with(
        airspeed,
        alpha_r,
        v_h,
        &InflowSolver {
            tol,
            max_iter,
            ..InflowSolver::default()
        },
    )
}

pub fn induced_velocity_with(airspeed: f64, alpha_r: f64, v_h: f64, cfg: &InflowSolver) -> Result<f64> {
    if !(v_h.is_finite() && v_h > 0.0) {
        return Err(Error::InvalidInput(format!("v_h must be positive, got {v_h}")));
    }
    if !(cfg.tol > 0.0) || !airspeed.is_finite() || !alpha_r.is_finite() || airspeed < 0.0 {
        return Err(Error::InvalidInput("bad induced-velocity arguments".into()));
    }
    let v_cos = airspeed * alpha_r.cos();
    let v_sin = airspeed * alpha_r.sin();
    let residual = |v: f64| v - inflow_rhs(v, v_cos, v_sin, v_h);

    let lambda = cfg.damping;
    let mut v = v_h;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for _ in 0..cfg.max_iter {
        let rhs = inflow_rhs(v, v_cos, v_sin, v_h);
        let res = (v - rhs).abs();
        if res < cfg.tol {
            return Ok(v);
        }
        if res < best * 0.999 {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 5 {
                break;
            }
        }
        v = (1.0 - lambda) * v + lambda * rhs;
        if !v.is_finite() || v <= 0.0 {
            break;
        }
    }

    // Bisection fallback.
    let (mut lo, mut hi) = (1e-6_f64, v_h + airspeed);
    let mut g_lo = residual(lo);
    if g_lo >= 0.0 {
        return if g_lo.abs() < cfg.tol {
            Ok(lo)
        } else {
            Err(Error::Convergence {
                residual: g_lo,
                iterations: cfg.max_iter,
            })
        };
    }
    let mut last = f64::INFINITY;
    for _ in 0..cfg.max_iter.max(200) {
        let mid = 0.5 * (lo + hi);
        let g_mid = residual(mid);
        last = g_mid;
        if g_mid.abs() < cfg.tol {
            return Ok(mid);
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Err(Error::Convergence {
        residual: last.abs(),
        iterations: cfg.max_iter,
    })
}

/// Advance ratios `(mu_x, mu_y, mu_z, mu_vin)`.
pub fn advance_ratios(
    u: f64,
    v: f64,
    w: f64,
    v_in: f64,
    omega_avg: f64,
    radius: f64,
) -> Result<(f64, f64, f64, f64)> {
    let tip = omega_avg * radius;
    if !(tip > TIP_SPEED_EPS) {
        return Err(Error::DegenerateDenominator { value: tip });
    }
    Ok((u / tip, v / tip, w / tip, v_in / tip))
}

pub fn build_feature_vector(state: &QuadState, geom: &RotorGeometry) -> Result<FeatureVector> {
    build_feature_vector_with(state, geom, &InflowSolver::default())
}

pub fn build_feature_vector_with(
    state: &QuadState,
    geom: &RotorGeometry,
    solver: &InflowSolver,
) -> Result<FeatureVector> {
    state.validate()?;
    geom.validate()?;
    let omega_avg = avg_rotor_speed(&state.omega)?;
    let (u_p, u_q, u_r) = control_moments(&state.omega, state.s_r)?;
    let v_in = induced_velocity_with(state.airspeed(), state.rotor_angle_of_attack(), geom.v_h, solver)?;
    let (mu_x, mu_y, mu_z, mu_vin) =
        advance_ratios(state.u, state.v, state.w, v_in, omega_avg, geom.radius)?;
    let (sin_phi, cos_phi) = state.phi.sin_cos();
    let (sin_theta, cos_theta) = state.theta.sin_cos();
    Ok(FeatureVector([
        state.u, state.v, state.w, v_in, state.p, state.q, state.r, omega_avg, sin_phi, cos_phi,
        sin_theta, cos_theta, u_p, u_q, u_r, mu_x, mu_y, mu_z, mu_vin,
    ]))
}
