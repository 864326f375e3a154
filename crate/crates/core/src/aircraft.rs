//! Point-mass aircraft model: parameters, aerodynamic forces and the
//! forward-Euler difference equations used for both planning and replay.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError, Result};
use crate::units::KNOT_MPS;

pub const GRAVITY: f64 = 9.81;
pub const SEA_LEVEL_DENSITY: f64 = 1.225;

const BUILTIN_A320: &str = include_str!("../../../data/aircraft/A320.toml");

/// Air density model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Atmosphere {
    /// Troposphere approximation `rho0 (1 - 2.2558e-5 z)^4.2559`.
    Isa,
    Constant(f64),
}

impl Atmosphere {
    #[inline]
    pub fn density(&self, z_m: f64) -> f64 {
        match *self {
            Atmosphere::Isa => {
                let base = (1.0 - 2.2558e-5 * z_m).max(0.0);
                SEA_LEVEL_DENSITY * base.powf(4.2559)
            }
            Atmosphere::Constant(rho) => rho,
        }
    }
}

/// Aircraft type parameters in internal SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct AircraftParams {
    pub type_designator: String,
    pub empty_mass_kg: f64,
    pub max_takeoff_mass_kg: f64,
    pub fuel_capacity_kg: f64,
    pub wing_area_m2: f64,
    pub cd0: f64,
    pub induced_drag_factor_k: f64,
    /// kg of fuel per N of thrust per second.
    pub fuel_coeff_cf1: f64,
    /// Speed normalisation of the fuel coefficient, m/s.
    pub fuel_coeff_cf2: f64,
    pub thrust_min_n: f64,
    pub thrust_max_n: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub gamma_max_rad: f64,
    pub phi_max_rad: f64,
    pub z_min_m: f64,
    pub z_max_m: f64,
    pub atmosphere: Atmosphere,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    #[serde(rename = "type")]
    type_designator: String,
    empty_mass_kg: f64,
    max_takeoff_mass_kg: f64,
    fuel_capacity_kg: f64,
    wing_area_m2: f64,
    cd0: f64,
    induced_drag_k: f64,
    cf1_kg_per_min_kn: f64,
    cf2_knots: f64,
    thrust_min_n: f64,
    thrust_max_n: f64,
    v_min_mps: f64,
    v_max_mps: f64,
    gamma_max_deg: f64,
    phi_max_deg: f64,
    z_min_m: f64,
    z_max_m: f64,
    #[serde(default)]
    atmosphere: Option<toml::Value>,
}

impl AircraftParams {
    /// Parses the flat key/value parameter document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ParamsFile =
            toml::from_str(text).map_err(|e| Error::config(format!("aircraft params: {e}")))?;
        let atmosphere = match &file.atmosphere {
            None => Atmosphere::Isa,
            Some(toml::Value::String(s)) if s.eq_ignore_ascii_case("isa") => Atmosphere::Isa,
            Some(toml::Value::Float(rho)) => Atmosphere::Constant(*rho),
            Some(toml::Value::Integer(rho)) => Atmosphere::Constant(*rho as f64),
            Some(other) => {
                return Err(Error::config(format!(
                    "aircraft params: atmosphere must be \"isa\" or a density, got {other}"
                )))
            }
        };
        if file.cf2_knots == 0.0 {
            return Err(Error::config("aircraft params: cf2_knots must be non-zero"));
        }
        let params = AircraftParams {
            type_designator: file.type_designator,
            empty_mass_kg: file.empty_mass_kg,
            max_takeoff_mass_kg: file.max_takeoff_mass_kg,
            fuel_capacity_kg: file.fuel_capacity_kg,
            wing_area_m2: file.wing_area_m2,
            cd0: file.cd0,
            induced_drag_factor_k: file.induced_drag_k,
            // kg/(min kN) -> kg/(s N)
            fuel_coeff_cf1: file.cf1_kg_per_min_kn / 60.0 / 1000.0,
            fuel_coeff_cf2: file.cf2_knots * KNOT_MPS,
            thrust_min_n: file.thrust_min_n,
            thrust_max_n: file.thrust_max_n,
            v_min_mps: file.v_min_mps,
            v_max_mps: file.v_max_mps,
            gamma_max_rad: file.gamma_max_deg.to_radians(),
            phi_max_rad: file.phi_max_deg.to_radians(),
            z_min_m: file.z_min_m,
            z_max_m: file.z_max_m,
            atmosphere,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Loads every `*.toml` in `dir`, keyed by type designator.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<HashMap<String, Self>> {
        let dir = dir.as_ref();
        let mut out = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for path in paths {
            let params = Self::load(&path)?;
            out.insert(params.type_designator.clone(), params);
        }
        if out.is_empty() {
            return Err(Error::config(format!("no aircraft parameter files in {}", dir.display())));
        }
        Ok(out)
    }

    /// The shipped A320-class coefficient set.
    pub fn a320() -> Self {
        Self::from_toml_str(BUILTIN_A320).expect("builtin A320 parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.empty_mass_kg,
            self.max_takeoff_mass_kg,
            self.fuel_capacity_kg,
            self.wing_area_m2,
            self.cd0,
            self.induced_drag_factor_k,
            self.fuel_coeff_cf1,
            self.fuel_coeff_cf2,
            self.thrust_min_n,
            self.thrust_max_n,
            self.v_min_mps,
            self.v_max_mps,
            self.gamma_max_rad,
            self.phi_max_rad,
            self.z_min_m,
            self.z_max_m,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("aircraft params: all values must be finite"));
        }
        if self.empty_mass_kg >= self.max_takeoff_mass_kg {
            return Err(Error::config(
                "aircraft params: empty mass must be below max take-off mass",
            ));
        }
        if self.thrust_min_n < 0.0 || self.thrust_min_n > self.thrust_max_n {
            return Err(Error::config("aircraft params: need 0 <= thrust_min <= thrust_max"));
        }
        if self.v_min_mps <= 0.0 || self.v_min_mps > self.v_max_mps {
            return Err(Error::config("aircraft params: need 0 < v_min <= v_max"));
        }
        if self.z_min_m > self.z_max_m {
            return Err(Error::config("aircraft params: need z_min <= z_max"));
        }
        if self.phi_max_rad <= 0.0 || self.phi_max_rad >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::config("aircraft params: phi_max must lie in (0, 90) deg"));
        }
        if self.gamma_max_rad < 0.0 || self.gamma_max_rad >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::config("aircraft params: gamma_max must lie in [0, 90) deg"));
        }
        Ok(())
    }

    /// Largest fuel coefficient inside the speed envelope.
    pub fn eta_max(&self) -> f64 {
        fuel_burn_coeff(self.v_max_mps, self)
    }
}

/// Position (x east, y north, z up), true airspeed, heading from +x
/// counter-clockwise, and total mass.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AircraftState {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub v_s_mps: f64,
    pub chi_rad: f64,
    pub mass_kg: f64,
}

impl AircraftState {
    #[inline]
    pub fn horizontal_range(&self) -> f64 {
        self.x_m.hypot(self.y_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust_n: f64,
    pub bank_rad: f64,
    pub climb_rad: f64,
}

/// Coordinated-turn lift and parabolic-polar drag.
#[inline]
pub fn lift_drag(
    state: &AircraftState,
    bank_rad: f64,
    params: &AircraftParams,
    air_density: f64,
) -> std::result::Result<(f64, f64), ModelError> {
    let cos_phi = bank_rad.cos();
    if !(bank_rad.abs() < std::f64::consts::FRAC_PI_2) || cos_phi <= 0.0 {
        return Err(ModelError::BankOutOfDomain(bank_rad));
    }
    let v = state.v_s_mps;
    if v <= 0.0 {
        return Err(ModelError::NonPositiveAirspeed(v));
    }
    let lift = state.mass_kg * GRAVITY / cos_phi;
    let qs = 0.5 * air_density * v * v * params.wing_area_m2;
    let cl = lift / qs;
    let drag = qs * (params.cd0 + params.induced_drag_factor_k * cl * cl);
    Ok((lift, drag))
}

/// `eta = cf1 (1 + v / cf2)` in kg/(N s).
#[inline]
pub fn fuel_burn_coeff(v_s_mps: f64, params: &AircraftParams) -> f64 {
    params.fuel_coeff_cf1 * (1.0 + v_s_mps / params.fuel_coeff_cf2)
}

/// One forward-Euler step of the six difference equations. No clamping.
#[inline]
pub fn step(
    state: &AircraftState,
    u: &ControlInput,
    wind: (f64, f64),
    dt_s: f64,
    params: &AircraftParams,
    eta: f64,
) -> std::result::Result<AircraftState, ModelError> {
    if !(dt_s > 0.0) {
        return Err(ModelError::InvalidTimeStep(dt_s));
    }
    if eta < 0.0 {
        return Err(ModelError::NegativeFuelCoefficient(eta));
    }
    let rho = params.atmosphere.density(state.z_m);
    let (lift, drag) = lift_drag(state, u.bank_rad, params, rho)?;
    let v = state.v_s_mps;
    let m = state.mass_kg;
    let (sin_chi, cos_chi) = state.chi_rad.sin_cos();
    let (sin_gamma, cos_gamma) = u.climb_rad.sin_cos();
    Ok(AircraftState {
        x_m: state.x_m + dt_s * (v * cos_chi * cos_gamma) + wind.0 * dt_s,
        y_m: state.y_m + dt_s * (v * sin_chi * cos_gamma) + wind.1 * dt_s,
        z_m: state.z_m + dt_s * (v * sin_gamma),
        v_s_mps: v + dt_s * ((u.thrust_n - drag) / m - GRAVITY * sin_gamma),
        chi_rad: state.chi_rad + dt_s * (lift * u.bank_rad.sin() / (m * v)),
        mass_kg: m - dt_s * (eta * u.thrust_n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_rho() -> AircraftParams {
        AircraftParams {
            atmosphere: Atmosphere::Constant(1.225),
            ..AircraftParams::a320()
        }
    }

    fn cruise() -> AircraftState {
        AircraftState {
            x_m: 1000.0,
            y_m: -500.0,
            z_m: 3000.0,
            v_s_mps: 100.0,
            chi_rad: 0.0,
            mass_kg: 60000.0,
        }
    }

    #[test]
    fn lift_equals_weight_at_zero_bank() {
        let (lift, _) = lift_drag(&cruise(), 0.0, &const_rho(), 1.225).unwrap();
        assert!((lift - 588_600.0).abs() < 1e-6);
    }

    #[test]
    fn drag_matches_hand_evaluation() {
        // 0.5*1.225*100^2*122.6 = 750925; CL = 588600/750925 = 0.783833...
        // D = 750925*(0.024 + 0.0375*CL^2) = 35323.36...
        let (_, drag) = lift_drag(&cruise(), 0.0, &const_rho(), 1.225).unwrap();
        assert!((drag - 35_323.359_902_8).abs() < 1e-3, "{drag}");
    }

    #[test]
    fn lift_drag_is_even_in_bank() {
        let p = const_rho();
        let a = lift_drag(&cruise(), 0.3, &p, 1.0).unwrap();
        let b = lift_drag(&cruise(), -0.3, &p, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bank_at_right_angle_is_a_domain_error() {
        let p = const_rho();
        assert!(matches!(
            lift_drag(&cruise(), std::f64::consts::FRAC_PI_2, &p, 1.0),
            Err(ModelError::BankOutOfDomain(_))
        ));
        let near = lift_drag(&cruise(), p.phi_max_rad * 0.999, &p, 1.0).unwrap();
        assert!(near.0.is_finite() && near.1.is_finite());
    }

    #[test]
    fn trimmed_level_flight() {
        let p = const_rho();
        let s = cruise();
        let (_, drag) = lift_drag(&s, 0.0, &p, 1.225).unwrap();
        let u = ControlInput {
            thrust_n: drag,
            bank_rad: 0.0,
            climb_rad: 0.0,
        };
        let eta = fuel_burn_coeff(s.v_s_mps, &p);
        let n = step(&s, &u, (0.0, 0.0), 10.0, &p, eta).unwrap();
        assert!((n.x_m - (s.x_m + 1000.0)).abs() < 1e-9);
        assert_eq!(n.y_m, s.y_m);
        assert_eq!(n.z_m, s.z_m);
        assert!((n.v_s_mps - s.v_s_mps).abs() < 1e-9);
        assert_eq!(n.chi_rad, s.chi_rad);
        assert!((s.mass_kg - n.mass_kg - 10.0 * eta * drag).abs() < 1e-9);
    }

    #[test]
    fn zero_thrust_burns_nothing() {
        let p = const_rho();
        let u = ControlInput::default();
        let n = step(&cruise(), &u, (3.0, 1.0), 10.0, &p, 1e-5).unwrap();
        assert_eq!(n.mass_kg, cruise().mass_kg);
    }

    #[test]
    fn zero_airspeed_is_rejected() {
        let p = const_rho();
        let s = AircraftState {
            v_s_mps: 0.0,
            ..cruise()
        };
        assert!(step(&s, &ControlInput::default(), (0.0, 0.0), 10.0, &p, 0.0).is_err());
    }

    #[test]
    fn fuel_coefficient_anchors() {
        let p = AircraftParams::a320();
        assert_eq!(fuel_burn_coeff(0.0, &p), p.fuel_coeff_cf1);
        assert!((fuel_burn_coeff(p.fuel_coeff_cf2, &p) - 2.0 * p.fuel_coeff_cf1).abs() < 1e-18);
        // 0.94 kg/(min kN) at 130 m/s with cf2 = 1000 kt:
        // 0.94/60000 * (1 + 130/514.444) = 1.962563...e-5
        let eta = fuel_burn_coeff(130.0, &p);
        assert!((eta - 1.962_563_3e-5).abs() < 1e-11, "{eta}");
    }

    #[test]
    fn isa_density_decreases_with_altitude() {
        let isa = Atmosphere::Isa;
        assert!((isa.density(0.0) - 1.225).abs() < 1e-12);
        assert!(isa.density(3000.0) < isa.density(0.0));
        assert!((isa.density(11000.0) - 0.3639).abs() < 2e-3);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = BUILTIN_A320.replace("cf2_knots = 1000.0", "cf2_knots = 0.0");
        assert!(AircraftParams::from_toml_str(&bad).is_err());
        let bad = BUILTIN_A320.replace("empty_mass_kg = 59000.0", "empty_mass_kg = 90000.0");
        assert!(AircraftParams::from_toml_str(&bad).is_err());
        let constant = BUILTIN_A320.replace("atmosphere = \"isa\"", "atmosphere = 1.2");
        assert_eq!(
            AircraftParams::from_toml_str(&constant).unwrap().atmosphere,
            Atmosphere::Constant(1.2)
        );
    }
}
