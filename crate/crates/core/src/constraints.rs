//! Unary (envelope, mass, landing sector) and pairwise (separation) checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::aircraft::{AircraftParams, AircraftState, ControlInput};
use crate::objectives::descent_angle_beta;
use crate::units::angle_between;

/// Slack on inclusive boundary comparisons so that values built from
/// degree constants still land on the accepting side.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingEnvelope {
    pub p_runway_m: f64,
    pub p_beta_rad: f64,
    pub p_chi_rad: f64,
    pub p_vs_mps: f64,
}

impl Default for LandingEnvelope {
    fn default() -> Self {
        LandingEnvelope {
            p_runway_m: 4000.0,
            p_beta_rad: 6f64.to_radians(),
            p_chi_rad: 15f64.to_radians(),
            p_vs_mps: 80.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationZone {
    pub p_r_m: f64,
    pub p_h_m: f64,
}

impl Default for SeparationZone {
    fn default() -> Self {
        SeparationZone {
            p_r_m: 2500.0,
            p_h_m: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    AltitudeLow,
    AltitudeHigh,
    ClimbAngle,
    BankAngle,
    ThrustLow,
    ThrustHigh,
    AirspeedLow,
    AirspeedHigh,
    Mass,
    Separation,
}

/// Envelope bounds on state and control. Bank is strict, the rest inclusive.
pub fn check_envelope(
    state: &AircraftState,
    u: &ControlInput,
    params: &AircraftParams,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if state.z_m < params.z_min_m {
        out.push(Violation::AltitudeLow);
    }
    if state.z_m > params.z_max_m {
        out.push(Violation::AltitudeHigh);
    }
    if u.climb_rad.abs() > params.gamma_max_rad {
        out.push(Violation::ClimbAngle);
    }
    if !(u.bank_rad.abs() < params.phi_max_rad) {
        out.push(Violation::BankAngle);
    }
    if u.thrust_n < params.thrust_min_n {
        out.push(Violation::ThrustLow);
    }
    if u.thrust_n > params.thrust_max_n {
        out.push(Violation::ThrustHigh);
    }
    if state.v_s_mps < params.v_min_mps {
        out.push(Violation::AirspeedLow);
    }
    if state.v_s_mps > params.v_max_mps {
        out.push(Violation::AirspeedHigh);
    }
    out
}

/// Allocation-free form of [`check_envelope`] for the inner loop.
#[inline]
pub fn envelope_ok(state: &AircraftState, u: &ControlInput, params: &AircraftParams) -> bool {
    state.z_m >= params.z_min_m
        && state.z_m <= params.z_max_m
        && u.climb_rad.abs() <= params.gamma_max_rad
        && u.bank_rad.abs() < params.phi_max_rad
        && u.thrust_n >= params.thrust_min_n
        && u.thrust_n <= params.thrust_max_n
        && state.v_s_mps >= params.v_min_mps
        && state.v_s_mps <= params.v_max_mps
}

#[inline]
pub fn check_mass(state: &AircraftState, params: &AircraftParams) -> bool {
    state.mass_kg >= params.empty_mass_kg
}

/// Two protection cylinders must not overlap: far enough apart
/// horizontally or vertically.
#[inline]
pub fn check_separation(a: &AircraftState, b: &AircraftState, zone: &SeparationZone) -> bool {
    let dx = a.x_m - b.x_m;
    let dy = a.y_m - b.y_m;
    let r = 2.0 * zone.p_r_m;
    dx * dx + dy * dy >= r * r || (a.z_m - b.z_m).abs() >= 2.0 * zone.p_h_m
}

/// Landing-sector entry test for a runway at the origin landing east to west.
pub fn in_landing_sector(state: &AircraftState, env: &LandingEnvelope) -> bool {
    let r = state.horizontal_range();
    if r > env.p_runway_m + BOUNDARY_EPS {
        return false;
    }
    if state.v_s_mps > env.p_vs_mps + BOUNDARY_EPS {
        return false;
    }
    // Bearing of the aircraft seen from the runway; x = 0 counts as 90 deg.
    let bearing = if state.x_m == 0.0 {
        PI / 2.0
    } else {
        state.y_m.atan2(state.x_m).abs()
    };
    if bearing > env.p_chi_rad + BOUNDARY_EPS {
        return false;
    }
    if angle_between(state.chi_rad, PI) > env.p_chi_rad + BOUNDARY_EPS {
        return false;
    }
    match descent_angle_beta(state.x_m, state.y_m, state.z_m) {
        Ok(beta) => beta <= env.p_beta_rad + BOUNDARY_EPS,
        Err(_) => false,
    }
}
