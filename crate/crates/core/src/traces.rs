//! Synthetic flight traces: simulated runs resampled to a coarse period, and
//! a scripted baseline in which arrivals hold in a stack before approaching.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aircraft::{fuel_burn_coeff, lift_drag, step, AircraftParams, AircraftState, ControlInput, GRAVITY};
use crate::constraints::in_landing_sector;
use crate::error::{Error, Result};
use crate::fuel::{FlightTrace, TraceSample};
use crate::rng::{stream, Purpose};
use crate::runner::RunRecord;
use crate::scenario::{Kind, Scenario};
use crate::units::wrap_pi;

fn stride(dt_s: f64, period_s: f64) -> Result<usize> {
    let ratio = period_s / dt_s;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 {
        return Err(Error::config(format!(
            "resample period {period_s} s must be a positive multiple of the step {dt_s} s"
        )));
    }
    Ok(n as usize)
}

/// Every `period_s / dt_s`-th realised state plus the final one.
pub fn resample_states(states: &[(usize, AircraftState)], dt_s: f64, period_s: f64) -> Result<Vec<TraceSample>> {
    let n = stride(dt_s, period_s)?;
    let mut out: Vec<TraceSample> = states
        .iter()
        .step_by(n)
        .map(|(k, s)| TraceSample::from_state(*k as f64 * dt_s, s))
        .collect();
    if let Some((k, s)) = states.last() {
        if (states.len() - 1) % n != 0 {
            out.push(TraceSample::from_state(*k as f64 * dt_s, s));
        }
    }
    Ok(out)
}

/// Traces of every aircraft of a run, seeded with the true initial mass.
pub fn resample_record(record: &RunRecord, dt_s: f64, period_s: f64) -> Result<Vec<FlightTrace>> {
    record
        .aircraft
        .iter()
        .filter(|a| a.states.len() >= 2)
        .map(|a| {
            let states: Vec<(usize, AircraftState)> = a.states.iter().map(|p| (p.step, p.state)).collect();
            Ok(FlightTrace {
                id: a.id.clone(),
                type_designator: a.type_designator.clone(),
                kind: a.kind,
                samples: resample_states(&states, dt_s, period_s)?,
                initial_mass_kg: a.initial_mass(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldingConfig {
    /// Range of the stack fix along the entry bearing.
    pub fix_range_m: f64,
    pub hold_min_s: f64,
    pub hold_max_s: f64,
    pub hold_speed_mps: f64,
    pub hold_bank_deg: f64,
    /// Start of the straight-in final on the extended centreline (x > 0).
    pub final_fix_m: f64,
    pub approach_speed_mps: f64,
    pub glide_deg: f64,
}

impl Default for HoldingConfig {
    fn default() -> Self {
        HoldingConfig {
            fix_range_m: 18_000.0,
            hold_min_s: 240.0,
            hold_max_s: 720.0,
            hold_speed_mps: 110.0,
            hold_bank_deg: 25.0,
            final_fix_m: 12_000.0,
            approach_speed_mps: 75.0,
            glide_deg: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptedFlight {
    pub id: String,
    pub type_designator: String,
    pub entry_step: usize,
    pub hold_s: f64,
    pub states: Vec<(usize, AircraftState)>,
    pub fuel_burned_kg: f64,
    pub landed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Inbound,
    Hold(f64),
    ToFinal,
    Final,
}

struct Targets {
    heading: f64,
    /// Commanded turn rate overrides the heading loop when set.
    turn_rate: Option<f64>,
    altitude: f64,
    speed: f64,
}

fn autopilot(s: &AircraftState, t: &Targets, p: &AircraftParams, max_bank: f64, max_climb: f64) -> Result<ControlInput> {
    let v = s.v_s_mps;
    let rate = t.turn_rate.unwrap_or_else(|| wrap_pi(t.heading - s.chi_rad) / 20.0);
    let bank = (rate * v / GRAVITY).atan().clamp(-max_bank, max_bank);
    let climb = ((t.altitude - s.z_m) / (v * 30.0)).atan().clamp(-max_climb, max_climb);
    let rho = p.atmosphere.density(s.z_m);
    let (_, drag) = lift_drag(s, bank, p, rho)?;
    let thrust = drag + s.mass_kg * GRAVITY * climb.sin() + s.mass_kg * (t.speed - v) / 30.0;
    Ok(ControlInput {
        thrust_n: thrust.clamp(p.thrust_min_n, p.thrust_max_n),
        bank_rad: bank,
        climb_rad: climb,
    })
}

/// Flies one arrival: inbound to the stack fix, `hold_s` of constant-bank
/// orbits, then a centreline approach from the east until the landing
/// sector is reached. No wind, no separation.
pub fn fly_holding_arrival(
    initial: &AircraftState,
    entry_step: usize,
    hold_s: f64,
    scenario: &Scenario,
    p: &AircraftParams,
    cfg: &HoldingConfig,
) -> Result<(Vec<(usize, AircraftState)>, bool)> {
    let dt = scenario.tma.dt_s;
    let bearing = initial.y_m.atan2(initial.x_m);
    let fix = (cfg.fix_range_m * bearing.cos(), cfg.fix_range_m * bearing.sin());
    let hold_bank = cfg.hold_bank_deg.to_radians();
    let max_bank = hold_bank.min(p.phi_max_rad);
    let glide = cfg.glide_deg.to_radians().tan();
    let final_alt = (cfg.final_fix_m * glide).max(p.z_min_m);
    // The stack is flown at the level that joins the glide at the fix.
    let hold_alt = initial.z_m.min(final_alt + cfg.fix_range_m * glide);
    let max_climb = (2.0 * cfg.glide_deg.to_radians()).min(p.gamma_max_rad);
    let mut s = *initial;
    let mut phase = Phase::Inbound;
    let mut states = vec![(entry_step, s)];
    let limit = scenario.step_limit();
    for k in entry_step..entry_step + limit {
        let to = |x: f64, y: f64| (y - s.y_m).atan2(x - s.x_m);
        let dist = |x: f64, y: f64| (x - s.x_m).hypot(y - s.y_m);
        phase = match phase {
            Phase::Inbound if dist(fix.0, fix.1) < 1_500.0 => Phase::Hold(0.0),
            Phase::Hold(t) if t >= hold_s => Phase::ToFinal,
            Phase::ToFinal if dist(cfg.final_fix_m, 0.0) < 2_000.0 => Phase::Final,
            // Overshot the runway: go around to the final fix.
            Phase::Final if s.x_m < 0.0 => Phase::ToFinal,
            other => other,
        };
        let mut targets = match phase {
            Phase::Inbound => Targets {
                heading: to(fix.0, fix.1),
                turn_rate: None,
                altitude: initial.z_m,
                speed: cfg.hold_speed_mps,
            },
            Phase::Hold(_) => Targets {
                heading: s.chi_rad,
                turn_rate: Some(-GRAVITY * hold_bank.tan() / s.v_s_mps),
                altitude: hold_alt,
                speed: cfg.hold_speed_mps,
            },
            Phase::ToFinal => Targets {
                heading: to(cfg.final_fix_m, 0.0),
                turn_rate: None,
                altitude: (final_alt + dist(cfg.final_fix_m, 0.0) * glide).min(s.z_m).max(final_alt),
                speed: cfg.approach_speed_mps,
            },
            // Pure pursuit of a point 3 km further down the centreline.
            Phase::Final => Targets {
                heading: (-s.y_m).atan2(-3_000.0),
                turn_rate: None,
                altitude: (s.x_m.max(0.0) * glide).max(p.z_min_m),
                speed: cfg.approach_speed_mps,
            },
        };
        // Slow down in level flight before descending further.
        if matches!(phase, Phase::ToFinal | Phase::Final) && s.v_s_mps > targets.speed + 3.0 {
            targets.altitude = s.z_m;
        }
        let u = autopilot(&s, &targets, p, max_bank, max_climb)?;
        s = step(&s, &u, (0.0, 0.0), dt, p, fuel_burn_coeff(s.v_s_mps, p))?;
        states.push((k + 1, s));
        if let Phase::Hold(t) = phase {
            phase = Phase::Hold(t + dt);
        }
        if in_landing_sector(&s, &scenario.landing) {
            return Ok((states, true));
        }
    }
    Ok((states, false))
}

/// Scripted holding baseline for every arrival of `scenario`; hold times are
/// drawn uniformly per aircraft from the seed.
pub fn holding_baseline(scenario: &Scenario, seed: u64, cfg: &HoldingConfig) -> Result<Vec<ScriptedFlight>> {
    if !(cfg.hold_min_s >= 0.0 && cfg.hold_max_s >= cfg.hold_min_s) {
        return Err(Error::config("holding: need 0 <= hold_min_s <= hold_max_s"));
    }
    let mut rng = stream(seed, 0, 0, Purpose::Traces, 0);
    let mut out = Vec::new();
    for spec in scenario.aircraft.iter().filter(|a| a.kind == Kind::Arrival) {
        let hold_s = if cfg.hold_max_s > cfg.hold_min_s {
            rng.random_range(cfg.hold_min_s..cfg.hold_max_s)
        } else {
            cfg.hold_min_s
        };
        let p = scenario.params_for(spec);
        let (states, landed) = fly_holding_arrival(&spec.initial, spec.entry_step, hold_s, scenario, p, cfg)?;
        let fuel = spec.initial.mass_kg - states.last().unwrap().1.mass_kg;
        out.push(ScriptedFlight {
            id: spec.id.clone(),
            type_designator: spec.type_designator.clone(),
            entry_step: spec.entry_step,
            hold_s,
            states,
            fuel_burned_kg: fuel,
            landed,
        });
    }
    Ok(out)
}

pub fn scripted_traces(flights: &[ScriptedFlight], dt_s: f64, period_s: f64) -> Result<Vec<FlightTrace>> {
    flights
        .iter()
        .map(|f| {
            Ok(FlightTrace {
                id: f.id.clone(),
                type_designator: f.type_designator.clone(),
                kind: Kind::Arrival,
                samples: resample_states(&f.states, dt_s, period_s)?,
                initial_mass_kg: f.states[0].1.mass_kg,
            })
        })
        .collect()
}
