//! Receding-horizon loop: each step solves for the active aircraft, applies
//! the first control of the selected plan and advances the aircraft under
//! the realised wind.

use std::time::Instant;

use serde::Serialize;

use crate::aircraft::{fuel_burn_coeff, step, AircraftState, ControlInput};
use crate::constraints::{check_envelope, check_mass, check_separation, in_landing_sector, Violation};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::scenario::{Kind, Scenario};
use crate::smc::{run_smc_in_pool, IterationDiagnostics, Problem, ProblemAircraft};
use crate::wind::WindGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    Landed,
    Exited,
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePoint {
    pub step: usize,
    #[serde(flatten)]
    pub state: AircraftState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AircraftRecord {
    pub id: String,
    pub kind: Kind,
    pub type_designator: String,
    pub entry_step: usize,
    /// Realised states from the entry step on.
    pub states: Vec<StatePoint>,
    /// `controls[k]` moved `states[k]` to `states[k + 1]`.
    pub controls: Vec<ControlInput>,
    /// Per-step burn `dt * eta * T`.
    pub burns_kg: Vec<f64>,
    pub fuel_burned_kg: f64,
    pub completion: Completion,
    pub completion_step: Option<usize>,
}

impl AircraftRecord {
    pub fn initial_mass(&self) -> f64 {
        self.states.first().map(|s| s.state.mass_kg).unwrap_or(0.0)
    }

    pub fn final_state(&self) -> Option<&AircraftState> {
        self.states.last().map(|s| &s.state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub active: usize,
    pub present: usize,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditViolation {
    pub step: usize,
    pub aircraft: String,
    pub other: Option<String>,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abort {
    pub step: usize,
    pub aircraft: String,
    pub iteration: usize,
    /// Kinds of the present aircraft when the solve failed.
    pub present_kinds: Vec<Kind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub seed: u64,
    pub aircraft: Vec<AircraftRecord>,
    pub steps: Vec<StepLog>,
    pub violations: Vec<AuditViolation>,
    pub aborted: Option<Abort>,
    #[serde(skip)]
    pub diagnostics: Vec<IterationDiagnostics>,
    pub max_concurrency: usize,
}

impl RunRecord {
    pub fn all_completed(&self) -> bool {
        self.aircraft.iter().all(|a| a.completion != Completion::Unfinished)
    }

    pub fn by_id(&self, id: &str) -> Option<&AircraftRecord> {
        self.aircraft.iter().find(|a| a.id == id)
    }
}

/// Per-aircraft loop status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Waiting,
    Present,
    Done,
}

/// Indices of aircraft to optimise at `step`: entered or entering within the
/// horizon, and not yet finished.
pub fn activate_deactivate(step: usize, scenario: &Scenario, status: &[Status]) -> Vec<usize> {
    let h = scenario.tma.horizon;
    scenario
        .aircraft
        .iter()
        .enumerate()
        .filter(|(i, a)| status[*i] != Status::Done && a.entry_step <= step + h)
        .map(|(i, _)| i)
        .collect()
}

/// Runs the scenario to completion or the step limit.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunRecord> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(scenario.smc.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| run_in_pool(scenario, seed))
}

fn run_in_pool(scenario: &Scenario, seed: u64) -> Result<RunRecord> {
    let dt = scenario.tma.dt_s;
    let h = scenario.tma.horizon;
    let n = scenario.aircraft.len();
    let wind = WindGrid::new(scenario.wind.clone(), dt)?;
    let mut realized_rng = stream(seed, u64::MAX, 0, Purpose::RealizedWind, 0);
    let mut field = wind.init_state(&mut realized_rng);
    let exit = scenario.exit_distance_m();

    let mut status = vec![Status::Waiting; n];
    let mut current: Vec<AircraftState> = scenario.aircraft.iter().map(|a| a.initial).collect();
    let mut records: Vec<AircraftRecord> = scenario
        .aircraft
        .iter()
        .map(|a| AircraftRecord {
            id: a.id.clone(),
            kind: a.kind,
            type_designator: a.type_designator.clone(),
            entry_step: a.entry_step,
            states: Vec::new(),
            controls: Vec::new(),
            burns_kg: Vec::new(),
            fuel_burned_kg: 0.0,
            completion: Completion::Unfinished,
            completion_step: None,
        })
        .collect();
    let mut run = RunRecord {
        scenario: scenario.name.clone(),
        seed,
        aircraft: Vec::new(),
        steps: Vec::new(),
        violations: Vec::new(),
        aborted: None,
        diagnostics: Vec::new(),
        max_concurrency: 0,
    };

    let enter = |i: usize, k: usize, status: &mut [Status], records: &mut [AircraftRecord]| {
        status[i] = Status::Present;
        records[i].states.push(StatePoint {
            step: k,
            state: scenario.aircraft[i].initial,
        });
    };
    for i in 0..n {
        if scenario.aircraft[i].entry_step == 0 {
            enter(i, 0, &mut status, &mut records);
        }
    }

    let limit = scenario.step_limit();
    for k in 0..limit {
        if status.iter().all(|s| *s == Status::Done) {
            break;
        }
        let live = activate_deactivate(k, scenario, &status);
        let present: Vec<usize> = live.iter().copied().filter(|&i| status[i] == Status::Present).collect();
        run.max_concurrency = run.max_concurrency.max(present.len());

        let started = Instant::now();
        let mut applied: Vec<(usize, ControlInput)> = Vec::with_capacity(present.len());
        if !present.is_empty() {
            let problem = Problem {
                aircraft: live
                    .iter()
                    .map(|&i| {
                        let spec = &scenario.aircraft[i];
                        ProblemAircraft {
                            id: i,
                            params: scenario.params_for(spec),
                            goal: spec.goal,
                            start: current[i],
                            offset: spec.entry_step.saturating_sub(k),
                        }
                    })
                    .collect(),
                horizon: h,
                dt_s: dt,
                t0_s: k as f64 * dt,
                landing: scenario.landing,
                separation: scenario.separation,
                wind: &wind,
                wind_state: &field,
                noise: scenario.population.as_ref(),
            };
            match run_smc_in_pool(&problem, &scenario.smc, seed, k as u64) {
                Ok(res) => {
                    run.diagnostics.extend(res.diagnostics);
                    for (slot, &i) in live.iter().enumerate() {
                        if status[i] == Status::Present {
                            applied.push((i, res.controls[slot][0]));
                        }
                    }
                }
                Err(Error::Infeasible { aircraft, iteration }) => {
                    run.aborted = Some(Abort {
                        step: k,
                        aircraft: scenario.aircraft[aircraft].id.clone(),
                        iteration,
                        present_kinds: present.iter().map(|&i| scenario.aircraft[i].kind).collect(),
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        run.steps.push(StepLog {
            step: k,
            active: live.len(),
            present: present.len(),
            solve_time_s: started.elapsed().as_secs_f64(),
        });

        // Advance under the realised field.
        let t = k as f64 * dt;
        for &(i, u) in &applied {
            let spec = &scenario.aircraft[i];
            let params = scenario.params_for(spec);
            let s = current[i];
            for v in check_envelope(&s, &u, params) {
                run.violations.push(AuditViolation {
                    step: k,
                    aircraft: spec.id.clone(),
                    other: None,
                    violation: v,
                });
            }
            let w = wind.sample_at(&field, s.x_m, s.y_m, s.z_m, t);
            let eta = fuel_burn_coeff(s.v_s_mps, params);
            let next = step(&s, &u, w, dt, params, eta)?;
            let burn = dt * eta * u.thrust_n;
            let rec = &mut records[i];
            rec.controls.push(u);
            rec.burns_kg.push(burn);
            rec.fuel_burned_kg += burn;
            rec.states.push(StatePoint { step: k + 1, state: next });
            current[i] = next;
            if !check_mass(&next, params) {
                run.violations.push(AuditViolation {
                    step: k + 1,
                    aircraft: spec.id.clone(),
                    other: None,
                    violation: Violation::Mass,
                });
            }
            for v in state_violations(&next, params) {
                run.violations.push(AuditViolation {
                    step: k + 1,
                    aircraft: spec.id.clone(),
                    other: None,
                    violation: v,
                });
            }
        }
        wind.step_state(&mut field, &mut realized_rng);

        for i in 0..n {
            if status[i] == Status::Waiting && scenario.aircraft[i].entry_step == k + 1 {
                enter(i, k + 1, &mut status, &mut records);
            }
        }
        // Separation among everyone in the air at k+1, landings included.
        let airborne: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Present).collect();
        for (a, &i) in airborne.iter().enumerate() {
            for &j in &airborne[a + 1..] {
                if !check_separation(&current[i], &current[j], &scenario.separation) {
                    run.violations.push(AuditViolation {
                        step: k + 1,
                        aircraft: scenario.aircraft[i].id.clone(),
                        other: Some(scenario.aircraft[j].id.clone()),
                        violation: Violation::Separation,
                    });
                }
            }
        }
        for &(i, _) in &applied {
            let spec = &scenario.aircraft[i];
            let done = match spec.kind {
                Kind::Arrival => in_landing_sector(&current[i], &scenario.landing).then_some(Completion::Landed),
                Kind::Departure => (current[i].horizontal_range() >= exit).then_some(Completion::Exited),
            };
            if let Some(c) = done {
                status[i] = Status::Done;
                records[i].completion = c;
                records[i].completion_step = Some(k + 1);
            }
        }
    }
    run.aircraft = records;
    Ok(run)
}

fn state_violations(s: &AircraftState, p: &crate::aircraft::AircraftParams) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.z_m < p.z_min_m {
        out.push(Violation::AltitudeLow);
    }
    if s.z_m > p.z_max_m {
        out.push(Violation::AltitudeHigh);
    }
    if s.v_s_mps < p.v_min_mps {
        out.push(Violation::AirspeedLow);
    }
    if s.v_s_mps > p.v_max_mps {
        out.push(Violation::AirspeedHigh);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowFuelRun {
    pub seed: u64,
    /// Aircraft ids in landing order.
    pub order: Vec<String>,
    pub low_fuel_remaining_kg: Option<f64>,
    pub high_fuel_remaining_kg: Option<f64>,
    pub low_fuel_mass_ok: bool,
    pub both_landed: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowFuelTable {
    pub low_fuel_id: String,
    pub high_fuel_id: String,
    pub low_first: usize,
    pub high_first: usize,
    pub mean_low_remaining_kg: Option<f64>,
    pub mean_high_remaining_kg: Option<f64>,
    pub runs: Vec<LowFuelRun>,
}

/// Runs the two-arrival fuel-priority template over seeds `0..repeats`
/// (offset by `base_seed`). The aircraft with less fuel on board at entry is
/// the low-fuel one.
pub fn low_fuel_experiment(template: &Scenario, repeats: usize, base_seed: u64) -> Result<LowFuelTable> {
    let arrivals: Vec<usize> = template
        .aircraft
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == Kind::Arrival)
        .map(|(i, _)| i)
        .collect();
    if arrivals.len() != 2 || template.aircraft.len() != 2 {
        return Err(Error::config("low-fuel template needs exactly two arrivals"));
    }
    let fuel_of = |i: usize| {
        let a = &template.aircraft[i];
        a.initial.mass_kg - template.params_for(a).empty_mass_kg
    };
    let (lo, hi) = if fuel_of(arrivals[0]) <= fuel_of(arrivals[1]) {
        (arrivals[0], arrivals[1])
    } else {
        (arrivals[1], arrivals[0])
    };
    let lo_id = template.aircraft[lo].id.clone();
    let hi_id = template.aircraft[hi].id.clone();
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let seed = base_seed + r as u64;
        let rec = run(template, seed)?;
        let mut landed: Vec<&AircraftRecord> = rec
            .aircraft
            .iter()
            .filter(|a| a.completion == Completion::Landed)
            .collect();
        landed.sort_by_key(|a| a.completion_step);
        let remaining = |id: &str| {
            rec.by_id(id).and_then(|a| {
                let p = template.params_for(&template.aircraft[if id == lo_id { lo } else { hi }]);
                a.final_state().map(|s| s.mass_kg - p.empty_mass_kg)
            })
        };
        let low_rec = rec.by_id(&lo_id).expect("present");
        let p_lo = template.params_for(&template.aircraft[lo]);
        runs.push(LowFuelRun {
            seed,
            order: landed.iter().map(|a| a.id.clone()).collect(),
            low_fuel_remaining_kg: remaining(&lo_id),
            high_fuel_remaining_kg: remaining(&hi_id),
            low_fuel_mass_ok: low_rec.states.iter().all(|s| check_mass(&s.state, p_lo)),
            both_landed: landed.len() == 2,
            aborted: rec.aborted.is_some(),
        });
    }
    let first = |id: &str| runs.iter().filter(|r| r.order.first().map(String::as_str) == Some(id)).count();
    let mean = |f: &dyn Fn(&LowFuelRun) -> Option<f64>| {
        let v: Vec<f64> = runs.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(LowFuelTable {
        low_first: first(&lo_id),
        high_first: first(&hi_id),
        mean_low_remaining_kg: mean(&|r| r.low_fuel_remaining_kg),
        mean_high_remaining_kg: mean(&|r| r.high_fuel_remaining_kg),
        low_fuel_id: lo_id,
        high_fuel_id: hi_id,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn scenario(doc: &str) -> Scenario {
        Scenario::from_toml_str(doc, Path::new(".")).unwrap()
    }

    const SMALL: &str = r#"
        [tma]
        horizon = 3
        [smc]
        particles = 128
        iterations = 3
        schedule = { base = 1.0, scale = 1.0, rate = 0.0 }
        [wind]
        sigma_profile = [[0.0, 0.0]]
    "#;

    #[test]
    fn activation_window() {
        let s = scenario(&format!(
            "{SMALL}\n[[aircraft]]\nid = \"a\"\nkind = \"departure\"\ntarget_bearing_deg = 0.0\nentry_step = 5\n"
        ));
        let mut status = vec![Status::Waiting];
        assert!(activate_deactivate(1, &s, &status).is_empty());
        assert_eq!(activate_deactivate(2, &s, &status), vec![0]);
        status[0] = Status::Done;
        assert!(activate_deactivate(6, &s, &status).is_empty());
        let empty = scenario(SMALL);
        assert!(activate_deactivate(0, &empty, &[]).is_empty());
    }

    #[test]
    fn replay_is_deterministic_and_fuel_closes() {
        let mut s = scenario(&format!(
            "{SMALL}\n[[aircraft]]\nid = \"d\"\nkind = \"departure\"\ntarget_bearing_deg = 180.0\n"
        ));
        s.tma.step_limit = Some(6);
        s.wind = crate::wind::WindConfig::default();
        let a = run(&s, 4).unwrap();
        let b = run(&s, 4).unwrap();
        assert!(a.aircraft == b.aircraft && a.violations == b.violations);
        let rec = &a.aircraft[0];
        assert_eq!(rec.states.len(), rec.controls.len() + 1);
        let closed = rec.initial_mass() - rec.final_state().unwrap().mass_kg;
        let summed: f64 = rec.burns_kg.iter().sum();
        assert!((closed - summed).abs() <= 1e-9 * closed.max(1.0));
        assert!((rec.fuel_burned_kg - summed).abs() <= 1e-9 * summed.max(1.0));
    }
}
