//! Maximisation-form costs for departures and arrivals, the arrival flow
//! field, and the population-density noise term.
//!
//! Every component is evaluated per predicted step, normalised into [0, 1],
//! and averaged over the horizon. Totals are plain weighted sums of the
//! component means.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aircraft::{fuel_burn_coeff, AircraftParams, AircraftState};
use crate::error::{Error, ModelError, Result};
use crate::units::{angle_between, wrap_two_pi};

const WEIGHT_SUM_TOL: f64 = 1e-9;
const MIN_ALTITUDE_SPAN_M: f64 = 1.0;

/// Flow-field heading as a compass bearing (clockwise from north) in radians.
pub fn flow_heading(x_m: f64, y_m: f64) -> std::result::Result<f64, ModelError> {
    if x_m == 0.0 && y_m == 0.0 {
        return Err(ModelError::AtOrigin(x_m, y_m));
    }
    Ok(wrap_two_pi(2.0 * x_m.atan2(y_m) + FRAC_PI_2))
}

/// Flow-field direction in the dynamics convention (counter-clockwise from +x).
pub fn flow_course(x_m: f64, y_m: f64) -> std::result::Result<f64, ModelError> {
    flow_heading(x_m, y_m).map(|h| wrap_two_pi(FRAC_PI_2 - h))
}

/// Descent angle against the remaining distance along the flow-field arc.
///
/// The arc denominator is `(pi - 2 atan(x/y)) r / cos(atan(x/y))`, written
/// here through `psi = atan2(|y|, x)` so that both half planes fold onto the
/// same arc family. On the centreline it reduces to `2r`; directly behind
/// the runway the denominator is unbounded and the angle is zero. At the
/// origin itself the limiting value `pi/2` is returned.
pub fn descent_angle_beta(x_m: f64, y_m: f64, z_m: f64) -> std::result::Result<f64, ModelError> {
    let r = x_m.hypot(y_m);
    if r == 0.0 {
        return Ok(if z_m == 0.0 { 0.0 } else { FRAC_PI_2.copysign(z_m) });
    }
    let psi = y_m.abs().atan2(x_m);
    let ratio = if psi < 1e-8 {
        1.0
    } else {
        let sin_psi = psi.sin();
        if psi >= PI || sin_psi <= 0.0 {
            return Ok(0.0);
        }
        psi / sin_psi
    };
    Ok((z_m / (2.0 * r * ratio)).atan())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::config(format!("cost weights must lie in [0, 1]: {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::config(format!("cost weights must sum to 1, got {sum}")));
    }
    Ok(())
}

#[inline]
fn unit_clamp(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Fuel component for one step: one minus the burn relative to the
/// largest possible single-step burn.
#[inline]
fn fuel_component(prev: &AircraftState, cur: &AircraftState, params: &AircraftParams, dt_s: f64) -> f64 {
    let sup = dt_s * params.thrust_max_n * fuel_burn_coeff(params.v_max_mps, params);
    if sup <= 0.0 {
        return 1.0;
    }
    unit_clamp(1.0 - (prev.mass_kg - cur.mass_kg) / sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepartureGoal {
    pub target_altitude_m: f64,
    pub target_bearing_rad: f64,
    pub target_airspeed_mps: f64,
    /// Bearing, fuel, altitude, airspeed.
    pub weights: [f64; 4],
}

impl DepartureGoal {
    pub const DEFAULT_WEIGHTS: [f64; 4] = [0.4, 0.1, 0.25, 0.25];

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)
    }

    /// Components at predicted step `j >= 1` of a horizon starting at altitude `start_z_m`.
    #[inline]
    pub fn step_components(
        &self,
        start_z_m: f64,
        j: usize,
        prev: &AircraftState,
        cur: &AircraftState,
        params: &AircraftParams,
        dt_s: f64,
    ) -> [f64; 4] {
        let bearing = if cur.x_m == 0.0 && cur.y_m == 0.0 {
            // No bearing defined at the runway itself.
            0.5
        } else {
            1.0 - angle_between(cur.y_m.atan2(cur.x_m), self.target_bearing_rad) / PI
        };

        let reach = j as f64 * dt_s * params.v_max_mps * params.gamma_max_rad.sin();
        let (lo, hi) = (start_z_m - reach, start_z_m + reach);
        let zt = self.target_altitude_m;
        let sup = (zt - lo).abs().max((zt - hi).abs());
        let inf = if zt < lo {
            lo - zt
        } else if zt > hi {
            zt - hi
        } else {
            0.0
        };
        let span = (sup - inf).max(MIN_ALTITUDE_SPAN_M);
        let altitude = unit_clamp((sup - (cur.z_m - zt).abs()) / span);

        let vd = self.target_airspeed_mps;
        let v_sup = (params.v_max_mps - vd).abs().max((params.v_min_mps - vd).abs());
        let airspeed = if v_sup > 0.0 {
            unit_clamp(1.0 - (cur.v_s_mps - vd).abs() / v_sup)
        } else {
            1.0
        };

        [bearing, fuel_component(prev, cur, params, dt_s), altitude, airspeed]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalGoal {
    pub nominal_descent_angle_rad: f64,
    /// Flow-field heading, descent angle, fuel.
    pub weights: [f64; 3],
}

impl ArrivalGoal {
    pub const DEFAULT_WEIGHTS: [f64; 3] = [0.25, 0.65, 0.1];

    pub fn validate(&self) -> Result<()> {
        check_weights(&self.weights)
    }

    #[inline]
    pub fn step_components(
        &self,
        prev: &AircraftState,
        cur: &AircraftState,
        params: &AircraftParams,
        dt_s: f64,
    ) -> [f64; 3] {
        let heading = match flow_course(cur.x_m, cur.y_m) {
            Ok(c) => 1.0 - angle_between(cur.chi_rad, c) / PI,
            Err(_) => 1.0,
        };
        let beta = descent_angle_beta(cur.x_m, cur.y_m, cur.z_m).unwrap_or(FRAC_PI_2);
        let descent = unit_clamp(1.0 - (beta - self.nominal_descent_angle_rad).abs() / PI);
        [heading, descent, fuel_component(prev, cur, params, dt_s)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Goal {
    Departure(DepartureGoal),
    Arrival(ArrivalGoal),
}

impl Goal {
    pub fn validate(&self) -> Result<()> {
        match self {
            Goal::Departure(g) => g.validate(),
            Goal::Arrival(g) => g.validate(),
        }
    }

    pub fn is_arrival(&self) -> bool {
        matches!(self, Goal::Arrival(_))
    }

    /// Weighted score of one predicted step, noise term included.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn step_score(
        &self,
        start_z_m: f64,
        j: usize,
        prev: &AircraftState,
        cur: &AircraftState,
        params: &AircraftParams,
        dt_s: f64,
        noise: Option<&PopulationMap>,
    ) -> f64 {
        let base = match self {
            Goal::Departure(g) => {
                let c = g.step_components(start_z_m, j, prev, cur, params, dt_s);
                (0..4).map(|i| g.weights[i] * c[i]).sum::<f64>()
            }
            Goal::Arrival(g) => {
                let c = g.step_components(prev, cur, params, dt_s);
                (0..3).map(|i| g.weights[i] * c[i]).sum::<f64>()
            }
        };
        // Weights may sum to 1 only within tolerance.
        unit_clamp(match noise {
            Some(map) if map.noise_weight > 0.0 => {
                (1.0 - map.noise_weight) * base
                    + map.noise_weight * noise_cost(cur.x_m, cur.y_m, cur.z_m, map)
            }
            _ => base,
        })
    }
}

/// Horizon-mean components and total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub components: Vec<f64>,
    pub noise: Option<f64>,
    pub total: f64,
}

fn blend(weights: &[f64], comps: Vec<f64>, noise: Option<(f64, f64)>) -> CostBreakdown {
    let base: f64 = weights.iter().zip(&comps).map(|(w, c)| w * c).sum();
    match noise {
        Some((wn, jn)) => CostBreakdown {
            components: comps,
            noise: Some(jn),
            total: unit_clamp((1.0 - wn) * base + wn * jn),
        },
        None => CostBreakdown {
            components: comps,
            noise: None,
            total: unit_clamp(base),
        },
    }
}

fn active_noise(map: Option<&PopulationMap>) -> Option<&PopulationMap> {
    map.filter(|m| m.noise_weight > 0.0)
}

/// Departure cost over a horizon `traj[0..=H]`, `traj[0]` being the current state.
pub fn departure_cost(
    traj: &[AircraftState],
    goal: &DepartureGoal,
    params: &AircraftParams,
    dt_s: f64,
    noise: Option<&PopulationMap>,
) -> Result<CostBreakdown> {
    goal.validate()?;
    if traj.len() < 2 {
        return Err(Error::config("cost horizon needs at least two states"));
    }
    let h = (traj.len() - 1) as f64;
    let noise = active_noise(noise);
    let mut comps = vec![0.0; 4];
    let mut jn = 0.0;
    for j in 1..traj.len() {
        let c = goal.step_components(traj[0].z_m, j, &traj[j - 1], &traj[j], params, dt_s);
        for (acc, v) in comps.iter_mut().zip(c) {
            *acc += v;
        }
        if let Some(map) = noise {
            jn += noise_cost(traj[j].x_m, traj[j].y_m, traj[j].z_m, map);
        }
    }
    for acc in comps.iter_mut() {
        *acc /= h;
    }
    Ok(blend(&goal.weights, comps, noise.map(|m| (m.noise_weight, jn / h))))
}

/// Arrival cost over a horizon. Steps after `landed_at` (an index into
/// `traj`) score 1 in every component.
pub fn arrival_cost(
    traj: &[AircraftState],
    landed_at: Option<usize>,
    goal: &ArrivalGoal,
    params: &AircraftParams,
    dt_s: f64,
    noise: Option<&PopulationMap>,
) -> Result<CostBreakdown> {
    goal.validate()?;
    if traj.len() < 2 {
        return Err(Error::config("cost horizon needs at least two states"));
    }
    let h = (traj.len() - 1) as f64;
    let noise = active_noise(noise);
    let mut comps = vec![0.0; 3];
    let mut jn = 0.0;
    for j in 1..traj.len() {
        if landed_at.is_some_and(|l| j > l) {
            for acc in comps.iter_mut() {
                *acc += 1.0;
            }
            jn += 1.0;
            continue;
        }
        let c = goal.step_components(&traj[j - 1], &traj[j], params, dt_s);
        for (acc, v) in comps.iter_mut().zip(c) {
            *acc += v;
        }
        if let Some(map) = noise {
            jn += noise_cost(traj[j].x_m, traj[j].y_m, traj[j].z_m, map);
        }
    }
    for acc in comps.iter_mut() {
        *acc /= h;
    }
    Ok(blend(&goal.weights, comps, noise.map(|m| (m.noise_weight, jn / h))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCentre {
    pub name: String,
    pub x_m: f64,
    pub y_m: f64,
    pub radius_m: f64,
}

#[derive(Debug, Deserialize)]
struct CentreRow {
    name: String,
    x_km: f64,
    y_km: f64,
    radius_km: f64,
}

/// Gaussian population-density field, tabulated on a square grid.
#[derive(Debug, Clone)]
pub struct PopulationMap {
    pub centres: Vec<PopulationCentre>,
    pub grid_spacing_m: f64,
    pub altitude_cutoff_m: f64,
    /// Fraction of the total cost given to the noise term.
    pub noise_weight: f64,
    origin_m: f64,
    n: usize,
    grid: Vec<f64>,
}

impl PopulationMap {
    pub const DEFAULT_HALF_EXTENT_M: f64 = 60_000.0;

    pub fn new(
        centres: Vec<PopulationCentre>,
        grid_spacing_m: f64,
        altitude_cutoff_m: f64,
        noise_weight: f64,
        half_extent_m: f64,
    ) -> Result<Self> {
        if centres.iter().any(|c| !(c.radius_m > 0.0)) {
            return Err(Error::config("population centre radii must be positive"));
        }
        if !(altitude_cutoff_m > 0.0) {
            return Err(Error::config("noise altitude cutoff must be positive"));
        }
        if !(grid_spacing_m > 0.0) || !(half_extent_m > 0.0) {
            return Err(Error::config("population grid spacing and extent must be positive"));
        }
        if !(0.0..1.0).contains(&noise_weight) {
            return Err(Error::config("noise weight must lie in [0, 1)"));
        }
        let n = (2.0 * half_extent_m / grid_spacing_m).ceil() as usize + 1;
        let mut map = PopulationMap {
            centres,
            grid_spacing_m,
            altitude_cutoff_m,
            noise_weight,
            origin_m: -half_extent_m,
            n,
            grid: Vec::with_capacity(n * n),
        };
        for iy in 0..n {
            for ix in 0..n {
                let x = map.origin_m + ix as f64 * grid_spacing_m;
                let y = map.origin_m + iy as f64 * grid_spacing_m;
                let v = map.density_exact(x, y);
                map.grid.push(v);
            }
        }
        Ok(map)
    }

    /// Reads `name,x_km,y_km,radius_km` records.
    pub fn load_centres(path: impl AsRef<Path>) -> Result<Vec<PopulationCentre>> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let mut out = Vec::new();
        for (i, row) in reader.deserialize::<CentreRow>().enumerate() {
            let row = row.map_err(|e| Error::Row {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                message: e.to_string(),
            })?;
            out.push(PopulationCentre {
                name: row.name,
                x_m: row.x_km * 1000.0,
                y_m: row.y_km * 1000.0,
                radius_m: row.radius_km * 1000.0,
            });
        }
        Ok(out)
    }

    /// Direct evaluation of the clipped Gaussian sum. Distances and radii
    /// enter in kilometres.
    pub fn density_exact(&self, x_m: f64, y_m: f64) -> f64 {
        let norm = (2.0 * PI).sqrt();
        let sum: f64 = self
            .centres
            .iter()
            .map(|c| {
                let b = (x_m - c.x_m).hypot(y_m - c.y_m) / 1000.0;
                let ck = c.radius_m / 1000.0;
                (-b * b / (2.0 * ck * ck)).exp() / (ck * norm)
            })
            .sum();
        sum.min(1.0)
    }

    /// Bilinear interpolation of the tabulated field; exact evaluation off the grid.
    pub fn popdense(&self, x_m: f64, y_m: f64) -> f64 {
        let fx = (x_m - self.origin_m) / self.grid_spacing_m;
        let fy = (y_m - self.origin_m) / self.grid_spacing_m;
        let last = (self.n - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= last && fy <= last) {
            return self.density_exact(x_m, y_m);
        }
        let ix = (fx.floor() as usize).min(self.n - 2);
        let iy = (fy.floor() as usize).min(self.n - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let at = |i: usize, j: usize| self.grid[j * self.n + i];
        let bottom = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let top = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        bottom * (1.0 - ty) + top * ty
    }
}

pub fn popdense(x_m: f64, y_m: f64, map: &PopulationMap) -> f64 {
    map.popdense(x_m, y_m)
}

/// `1 - max(1 - (a / A_c)^2, 0) * popdense`: 1 above the cutoff, lowest
/// over dense areas near the ground.
pub fn noise_cost(x_m: f64, y_m: f64, z_m: f64, map: &PopulationMap) -> f64 {
    let ac = map.altitude_cutoff_m;
    let frac = 1.0 - (ac - z_m) / ac;
    let quad = (1.0 - frac * frac).max(0.0);
    // Below ground the quadratic element would exceed 1 only for a < 0.
    unit_clamp(1.0 - quad.min(1.0) * map.popdense(x_m, y_m))
}

/// Low-altitude exposure density used for trajectory audits.
pub fn exposure(x_m: f64, y_m: f64, z_m: f64, map: &PopulationMap) -> f64 {
    1.0 - noise_cost(x_m, y_m, z_m, map)
}
