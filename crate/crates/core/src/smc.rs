//! Sequential Monte Carlo optimiser over joint control sequences.
//!
//! Each particle holds an H-step control sequence for every active aircraft
//! and one weight per aircraft. Weights live in log space; `-inf` is a zero
//! weight. Particles are evaluated in parallel chunks, each with its own
//! counter-seeded stream, so results do not depend on the chunk layout or
//! the worker count.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircraft::{fuel_burn_coeff, step, AircraftParams, AircraftState, ControlInput};
use crate::constraints::{
    check_mass, check_separation, envelope_ok, in_landing_sector, LandingEnvelope, SeparationZone,
};
use crate::error::{Error, Result};
use crate::objectives::{Goal, PopulationMap};
use crate::rng::{stream, Purpose};
use crate::wind::{WindGrid, WindState};

/// Bank samples stay this fraction inside the strict bank bound.
const BANK_MARGIN: f64 = 1e-6;

/// Inner-repeat count per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSchedule {
    pub base: f64,
    pub scale: f64,
    pub rate: f64,
}

impl Default for SampleSchedule {
    fn default() -> Self {
        SampleSchedule {
            base: 3.0,
            scale: 5.0,
            rate: 0.05,
        }
    }
}

impl SampleSchedule {
    /// `floor(base + scale * exp(rate * J))`, at least 1.
    pub fn repeats(&self, iteration: usize) -> usize {
        let v = (self.base + self.scale * (self.rate * iteration as f64).exp()).floor();
        (v.max(1.0)) as usize
    }
}

pub fn sample_schedule(iteration: usize) -> usize {
    SampleSchedule::default().repeats(iteration)
}

/// Gaussian perturbation scales before annealing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSigma {
    /// Fraction of the thrust range.
    pub thrust_frac: f64,
    pub bank_deg: f64,
    pub climb_deg: f64,
    /// Multiplier applied once per outer iteration.
    pub anneal: f64,
}

impl Default for PerturbSigma {
    fn default() -> Self {
        PerturbSigma {
            thrust_frac: 0.05,
            bank_deg: 2.0,
            climb_deg: 0.5,
            anneal: 0.98,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcConfig {
    pub particles: usize,
    pub iterations: usize,
    pub schedule: SampleSchedule,
    pub sigma: PerturbSigma,
    pub chunk_size: usize,
    pub workers: usize,
    pub elitism: bool,
    /// Caps the distinct disturbance draws per outer iteration; the log
    /// weight increment of the drawn rollouts is scaled up to the scheduled
    /// repeat count. `None` draws every repeat.
    pub max_draws: Option<usize>,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            particles: 10240,
            iterations: 100,
            schedule: SampleSchedule::default(),
            sigma: PerturbSigma::default(),
            chunk_size: 64,
            workers: 1,
            elitism: false,
            max_draws: None,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::config("particle count must be at least 1"));
        }
        if self.chunk_size == 0 {
            return Err(Error::config("chunk size must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::config("worker count must be at least 1"));
        }
        if self.max_draws == Some(0) {
            return Err(Error::config("max_draws must be at least 1"));
        }
        if !(self.schedule.rate >= 0.0 && self.schedule.scale >= 0.0) {
            return Err(Error::config("sample schedule must be non-decreasing"));
        }
        let s = &self.sigma;
        if [s.thrust_frac, s.bank_deg, s.climb_deg].iter().any(|v| !(*v >= 0.0)) || !(s.anneal > 0.0) {
            return Err(Error::config("perturbation scales must be non-negative"));
        }
        Ok(())
    }
}

/// One aircraft taking part in a solve.
#[derive(Debug, Clone)]
pub struct ProblemAircraft<'a> {
    /// Identifier reported in errors.
    pub id: usize,
    pub params: &'a AircraftParams,
    pub goal: Goal,
    /// Current state, or the entry state when `offset > 0`.
    pub start: AircraftState,
    /// Horizon slot at which the aircraft enters.
    pub offset: usize,
}

/// Everything a particle evaluation needs. Shared read-only across workers.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub aircraft: Vec<ProblemAircraft<'a>>,
    pub horizon: usize,
    pub dt_s: f64,
    /// Simulation time of horizon slot 0.
    pub t0_s: f64,
    pub landing: LandingEnvelope,
    pub separation: SeparationZone,
    pub wind: &'a WindGrid,
    /// Field at slot 0; later slots evolve it with per-particle innovations.
    pub wind_state: &'a WindState,
    pub noise: Option<&'a PopulationMap>,
}

impl Problem<'_> {
    pub fn n(&self) -> usize {
        self.aircraft.len()
    }
}

/// Flat particle storage: controls `[particle][aircraft][slot]`, log weights
/// `[particle][aircraft]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub particles: usize,
    pub aircraft: usize,
    pub horizon: usize,
    pub controls: Vec<ControlInput>,
    pub log_w: Vec<f64>,
}

impl Population {
    #[inline]
    pub fn block(&self) -> usize {
        self.aircraft * self.horizon
    }

    pub fn particle_controls(&self, l: usize) -> &[ControlInput] {
        &self.controls[l * self.block()..(l + 1) * self.block()]
    }

    pub fn aircraft_controls(&self, l: usize, i: usize) -> &[ControlInput] {
        let s = l * self.block() + i * self.horizon;
        &self.controls[s..s + self.horizon]
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.log_w[l * self.aircraft..(l + 1) * self.aircraft]
    }

    pub fn reset_weights(&mut self) {
        let v = -(self.particles as f64).ln();
        self.log_w.iter_mut().for_each(|w| *w = v);
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    t_lo: f64,
    t_hi: f64,
    phi: f64,
    gamma: f64,
}

impl Bounds {
    fn of(p: &AircraftParams) -> Self {
        Bounds {
            t_lo: p.thrust_min_n,
            t_hi: p.thrust_max_n,
            phi: p.phi_max_rad * (1.0 - BANK_MARGIN),
            gamma: p.gamma_max_rad,
        }
    }

    #[inline]
    fn clamp(&self, u: &mut ControlInput) {
        u.thrust_n = u.thrust_n.clamp(self.t_lo, self.t_hi);
        u.bank_rad = u.bank_rad.clamp(-self.phi, self.phi);
        u.climb_rad = u.climb_rad.clamp(-self.gamma, self.gamma);
    }
}

/// Uniform controls within the envelope for every aircraft and slot; all
/// weights `1/L`.
pub fn init_particles(problem: &Problem, particles: usize, seed: u64, solve: u64) -> Population {
    init_with_tag(problem, particles, seed, solve, 0)
}

fn init_with_tag(problem: &Problem, particles: usize, seed: u64, solve: u64, tag: u64) -> Population {
    let n = problem.n();
    let h = problem.horizon;
    let bounds: Vec<Bounds> = problem.aircraft.iter().map(|a| Bounds::of(a.params)).collect();
    let mut controls = vec![ControlInput::default(); particles * n * h];
    if n * h > 0 {
        controls.chunks_mut(n * h).enumerate().for_each(|(l, block)| {
            let mut rng = stream(seed, solve, tag, Purpose::Init, l as u64);
            for (i, b) in bounds.iter().enumerate() {
                for u in &mut block[i * h..(i + 1) * h] {
                    u.thrust_n = uniform(&mut rng, b.t_lo, b.t_hi);
                    u.bank_rad = uniform(&mut rng, -b.phi, b.phi);
                    u.climb_rad = uniform(&mut rng, -b.gamma, b.gamma);
                }
            }
        });
    }
    let mut pop = Population {
        particles,
        aircraft: n,
        horizon: h,
        controls,
        log_w: vec![0.0; particles * n],
    };
    pop.reset_weights();
    pop
}

#[inline]
fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Per-repeat working memory for one particle evaluation.
struct Scratch {
    states: Vec<AircraftState>,
    live: Vec<bool>,
    landed: Vec<bool>,
    landed_now: Vec<bool>,
    dead: Vec<bool>,
    present: Vec<bool>,
    score: Vec<f64>,
    start_z: Vec<f64>,
    wind: WindState,
    noise: Vec<f64>,
}

impl Scratch {
    fn new(problem: &Problem) -> Self {
        let n = problem.n();
        Scratch {
            states: vec![AircraftState::default(); n],
            live: vec![false; n],
            landed: vec![false; n],
            landed_now: vec![false; n],
            dead: vec![false; n],
            present: vec![false; n],
            score: vec![0.0; n],
            start_z: vec![0.0; n],
            wind: problem.wind_state.clone(),
            noise: Vec::with_capacity(2 * problem.wind.node_count()),
        }
    }
}

/// Outcome of simulating one control set under one disturbance draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Mean per-step score per aircraft, `None` when a constraint failed.
    pub costs: Vec<Option<f64>>,
    /// Realised states per aircraft for slots `offset..=H` (landing truncates).
    pub trajectories: Vec<Vec<AircraftState>>,
}

/// Simulates all aircraft in lockstep over the horizon under one draw of
/// the planning wind, filling `cost_out` with per-aircraft mean scores (or
/// `NaN` on failure). Optionally records trajectories.
fn rollout<R: Rng>(
    problem: &Problem,
    controls: &[ControlInput],
    rng: &mut R,
    sc: &mut Scratch,
    cost_out: &mut [f64],
    mut record: Option<&mut Vec<Vec<AircraftState>>>,
) {
    let n = problem.n();
    let h = problem.horizon;
    sc.wind.w_x.copy_from_slice(&problem.wind_state.w_x);
    sc.wind.w_y.copy_from_slice(&problem.wind_state.w_y);
    for (i, a) in problem.aircraft.iter().enumerate() {
        sc.states[i] = a.start;
        sc.live[i] = a.offset == 0;
        sc.landed[i] = false;
        sc.landed_now[i] = false;
        sc.dead[i] = false;
        sc.score[i] = 0.0;
        sc.start_z[i] = a.start.z_m;
        if let Some(rec) = record.as_deref_mut() {
            rec[i].clear();
            if a.offset <= h {
                rec[i].push(a.start);
            }
        }
    }
    for t in 0..h {
        if t > 0 {
            problem.wind.step_state_buffered(&mut sc.wind, rng, &mut sc.noise);
        }
        let time = problem.t0_s + t as f64 * problem.dt_s;
        for (i, a) in problem.aircraft.iter().enumerate() {
            if !sc.live[i] {
                continue;
            }
            let j = t + 1 - a.offset;
            if sc.landed[i] {
                sc.score[i] += 1.0;
                continue;
            }
            let s = sc.states[i];
            let u = controls[i * h + t];
            let params = a.params;
            if !envelope_ok(&s, &u, params) {
                sc.dead[i] = true;
            }
            let w = problem.wind.sample_at(&sc.wind, s.x_m, s.y_m, s.z_m, time);
            let eta = fuel_burn_coeff(s.v_s_mps, params);
            let next = match step(&s, &u, w, problem.dt_s, params, eta) {
                Ok(next) => next,
                Err(_) => {
                    sc.dead[i] = true;
                    sc.live[i] = false;
                    continue;
                }
            };
            if !state_ok(&next, params) {
                sc.dead[i] = true;
            }
            sc.score[i] += a.goal.step_score(
                sc.start_z[i],
                j,
                &s,
                &next,
                params,
                problem.dt_s,
                problem.noise,
            );
            sc.states[i] = next;
            if let Some(rec) = record.as_deref_mut() {
                rec[i].push(next);
            }
            if a.goal.is_arrival() && in_landing_sector(&next, &problem.landing) {
                sc.landed[i] = true;
                sc.landed_now[i] = true;
            }
        }
        // Who occupies airspace at time t+1: aircraft simulated through this
        // slot (a landing counts once) and aircraft entering at t+1.
        for (i, a) in problem.aircraft.iter().enumerate() {
            let entering = a.offset == t + 1;
            let flown = a.offset <= t && sc.live[i] && (!sc.landed[i] || sc.landed_now[i]);
            sc.present[i] = entering || flown;
            if entering {
                sc.live[i] = true;
            }
            sc.landed_now[i] = false;
        }
        for i in 0..n {
            if !sc.present[i] {
                continue;
            }
            for k in i + 1..n {
                if sc.present[k] && !check_separation(&sc.states[i], &sc.states[k], &problem.separation) {
                    sc.dead[i] = true;
                    sc.dead[k] = true;
                }
            }
        }
    }
    for (i, a) in problem.aircraft.iter().enumerate() {
        cost_out[i] = if sc.dead[i] {
            f64::NAN
        } else if a.offset >= h {
            1.0
        } else {
            sc.score[i] / (h - a.offset) as f64
        };
    }
}

/// State-only envelope bounds and the mass floor.
#[inline]
pub fn state_ok(s: &AircraftState, p: &AircraftParams) -> bool {
    s.z_m >= p.z_min_m
        && s.z_m <= p.z_max_m
        && s.v_s_mps >= p.v_min_mps
        && s.v_s_mps <= p.v_max_mps
        && check_mass(s, p)
}

/// Multiplies each aircraft weight by its cost for `repeats` disturbance
/// draws, in log space.
pub fn evaluate_particle<R: Rng>(
    problem: &Problem,
    controls: &[ControlInput],
    log_w: &mut [f64],
    repeats: usize,
    rng: &mut R,
) {
    let mut sc = Scratch::new(problem);
    let mut costs = vec![0.0; problem.n()];
    evaluate_with(problem, controls, log_w, repeats, repeats, rng, &mut sc, &mut costs);
}

fn evaluate_with<R: Rng>(
    problem: &Problem,
    controls: &[ControlInput],
    log_w: &mut [f64],
    repeats: usize,
    draws: usize,
    rng: &mut R,
    sc: &mut Scratch,
    costs: &mut [f64],
) {
    if repeats == 0 {
        return;
    }
    // Without disturbances every repeat is the same rollout.
    let draws = if problem.wind.is_zero() { 1 } else { draws.clamp(1, repeats) };
    let scale = repeats as f64 / draws as f64;
    for _ in 0..draws {
        rollout(problem, controls, rng, sc, costs, None);
        for (w, c) in log_w.iter_mut().zip(costs.iter()) {
            if c.is_nan() || *c <= 0.0 {
                *w = f64::NEG_INFINITY;
            } else if draws == repeats {
                *w += c.ln();
            } else {
                *w += scale * c.ln();
            }
        }
    }
}

/// Simulates a single control set once and returns the costs and the
/// predicted trajectories.
pub fn simulate_controls<R: Rng>(problem: &Problem, controls: &[ControlInput], rng: &mut R) -> Rollout {
    let n = problem.n();
    let mut sc = Scratch::new(problem);
    let mut costs = vec![0.0; n];
    let mut rec = vec![Vec::new(); n];
    rollout(problem, controls, rng, &mut sc, &mut costs, Some(&mut rec));
    Rollout {
        costs: costs.iter().map(|c| if c.is_nan() { None } else { Some(*c) }).collect(),
        trajectories: rec,
    }
}

/// Evaluates every particle on the current pool. Each particle's weights are
/// scaled by `repeats` cost factors estimated from `draws` disturbance
/// realisations (`draws >= repeats` is exact).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_population(
    problem: &Problem,
    pop: &mut Population,
    repeats: usize,
    draws: usize,
    chunk_size: usize,
    seed: u64,
    solve: u64,
    iteration: u64,
) {
    let n = pop.aircraft;
    if n == 0 {
        return;
    }
    let block = pop.block();
    let controls = &pop.controls;
    pop.log_w
        .par_chunks_mut(chunk_size * n)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut sc = Scratch::new(problem);
            let mut costs = vec![0.0; n];
            for (k, w) in chunk.chunks_mut(n).enumerate() {
                let l = c * chunk_size + k;
                let mut rng = stream(seed, solve, iteration, Purpose::Evaluate, l as u64);
                let ctrl = &controls[l * block..(l + 1) * block];
                evaluate_with(problem, ctrl, w, repeats, draws, &mut rng, &mut sc, &mut costs);
            }
        });
}

/// Systematic resampling offspring for one weight column, given the offset `u` in [0, 1).
/// Returns the ancestor index of each offspring, or `None` for an all-zero column.
pub fn systematic_ancestors(log_w: &[f64], u: f64) -> Option<Vec<usize>> {
    let l = log_w.len();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(l);
    let mut cum = 0.0;
    let mut idx = 0;
    for k in 0..l {
        let pos = (u + k as f64) / l as f64 * total;
        while idx < l - 1 && cum + w[idx] <= pos {
            cum += w[idx];
            idx += 1;
        }
        // Never pick a zero-weight ancestor.
        while w[idx] == 0.0 && idx < l - 1 {
            idx += 1;
        }
        let mut a = idx;
        while w[a] == 0.0 {
            a -= 1;
        }
        out.push(a);
    }
    Some(out)
}

/// Resamples each aircraft column independently and recombines; weights reset
/// to `1/L`. Errors with the first aircraft whose column is entirely zero.
pub fn resample(pop: &Population, problem: &Problem, seed: u64, solve: u64, iteration: u64) -> Result<Population> {
    let (l, n, h) = (pop.particles, pop.aircraft, pop.horizon);
    let mut master = stream(seed, solve, iteration, Purpose::Resample, 0);
    let mut out = pop.clone();
    let mut column = vec![0.0; l];
    for i in 0..n {
        let u: f64 = master.random();
        for (p, c) in column.iter_mut().enumerate() {
            *c = pop.log_w[p * n + i];
        }
        let anc = systematic_ancestors(&column, u).ok_or(Error::Infeasible {
            aircraft: problem.aircraft[i].id,
            iteration: iteration as usize,
        })?;
        for (k, a) in anc.into_iter().enumerate() {
            let dst = k * n * h + i * h;
            let src = a * n * h + i * h;
            out.controls[dst..dst + h].copy_from_slice(&pop.controls[src..src + h]);
        }
    }
    out.reset_weights();
    Ok(out)
}

/// Adds zero-mean Gaussian noise to every control and clamps to the envelope.
#[allow(clippy::too_many_arguments)]
pub fn perturb(
    pop: &mut Population,
    problem: &Problem,
    sigma: &PerturbSigma,
    iteration: usize,
    seed: u64,
    solve: u64,
    tag: u64,
) {
    let (n, h) = (pop.aircraft, pop.horizon);
    if n * h == 0 {
        return;
    }
    let anneal = sigma.anneal.powi(iteration as i32);
    let scales: Vec<(Bounds, [f64; 3])> = problem
        .aircraft
        .iter()
        .map(|a| {
            let p = a.params;
            (
                Bounds::of(p),
                [
                    sigma.thrust_frac * (p.thrust_max_n - p.thrust_min_n) * anneal,
                    sigma.bank_deg.to_radians() * anneal,
                    sigma.climb_deg.to_radians() * anneal,
                ],
            )
        })
        .collect();
    let iter_key = ((iteration as u64) << 8) | tag;
    pop.controls.chunks_mut(n * h).enumerate().for_each(|(l, block)| {
        let mut rng = stream(seed, solve, iter_key, Purpose::Perturb, l as u64);
        for (i, (b, s)) in scales.iter().enumerate() {
            for u in &mut block[i * h..(i + 1) * h] {
                let z: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                u.thrust_n += s[0] * z[0];
                u.bank_rad += s[1] * z[1];
                u.climb_rad += s[2] * z[2];
                b.clamp(u);
            }
        }
    });
}

/// The particle maximising the product of its aircraft weights. Particles
/// with any zero weight are excluded.
pub fn select_best(pop: &Population) -> Option<usize> {
    let n = pop.aircraft;
    let mut best: Option<(usize, f64)> = None;
    for l in 0..pop.particles {
        let w = &pop.log_w[l * n..(l + 1) * n];
        if w.iter().any(|x| !x.is_finite()) {
            continue;
        }
        let s: f64 = w.iter().sum();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((l, s));
        }
    }
    best.map(|(l, _)| l)
}

/// Effective sample size of one aircraft's weight column.
pub fn effective_sample_size(pop: &Population, i: usize) -> f64 {
    let n = pop.aircraft;
    let max = (0..pop.particles)
        .map(|l| pop.log_w[l * n + i])
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return 0.0;
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for l in 0..pop.particles {
        let w = (pop.log_w[l * n + i] - max).exp();
        s1 += w;
        s2 += w * w;
    }
    s1 * s1 / s2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub solve: u64,
    pub iteration: usize,
    pub repeats: usize,
    pub ess: Vec<f64>,
    pub best_log_weight: Option<f64>,
    /// Kept out of the serialised record so identical runs write identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SmcResult {
    /// Selected controls, `[aircraft][slot]`.
    pub controls: Vec<Vec<ControlInput>>,
    /// Log weights of the selected particle after the final evaluation.
    pub log_weights: Vec<f64>,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub particle: usize,
}

/// Runs the optimiser on a worker pool built for this call.
pub fn run_smc(problem: &Problem, config: &SmcConfig, seed: u64, solve: u64) -> Result<SmcResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| run_smc_in_pool(problem, config, seed, solve))
}

/// Runs the optimiser on the current rayon pool.
pub fn run_smc_in_pool(problem: &Problem, config: &SmcConfig, seed: u64, solve: u64) -> Result<SmcResult> {
    config.validate()?;
    let n = problem.n();
    if n == 0 {
        return Err(Error::config("no active aircraft to optimise"));
    }
    let l = config.particles;
    let mut diagnostics = Vec::with_capacity(config.iterations + 1);
    let mut pop = init_particles(problem, l, seed, solve);
    // Parents of the current population; used to redraw a failed iteration.
    let mut parents: Option<Population> = None;
    for j in 0..=config.iterations {
        let started = Instant::now();
        let repeats = config.schedule.repeats(j);
        let mut attempt = 0u64;
        loop {
            let draws = config.max_draws.unwrap_or(repeats);
            evaluate_population(problem, &mut pop, repeats, draws, config.chunk_size, seed, solve, (j as u64) << 8 | attempt);
            let dead_column = (0..n).find(|&i| (0..l).all(|p| !pop.log_w[p * n + i].is_finite()));
            let no_winner = select_best(&pop).is_none();
            if dead_column.is_none() && (j < config.iterations || !no_winner) {
                break;
            }
            if attempt >= 1 {
                let aircraft = dead_column.unwrap_or_else(|| worst_aircraft(&pop));
                return Err(Error::Infeasible {
                    aircraft: problem.aircraft[aircraft].id,
                    iteration: j,
                });
            }
            attempt += 1;
            log::debug!("solve {solve} iteration {j}: redrawing infeasible population");
            pop = match &parents {
                None => init_with_tag(problem, l, seed, solve, attempt),
                Some(par) => {
                    let mut p = par.clone();
                    perturb(&mut p, problem, &config.sigma, j, seed, solve, attempt);
                    p
                }
            };
        }
        let best = select_best(&pop);
        diagnostics.push(IterationDiagnostics {
            solve,
            iteration: j,
            repeats,
            ess: (0..n).map(|i| effective_sample_size(&pop, i)).collect(),
            best_log_weight: best.map(|b| pop.weights(b).iter().sum()),
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        if j == config.iterations {
            break;
        }
        let elite = if config.elitism {
            best.map(|b| pop.particle_controls(b).to_vec())
        } else {
            None
        };
        let resampled = resample(&pop, problem, seed, solve, j as u64)?;
        pop = resampled.clone();
        perturb(&mut pop, problem, &config.sigma, j + 1, seed, solve, 0);
        if let Some(e) = elite {
            pop.controls[..e.len()].copy_from_slice(&e);
        }
        parents = Some(resampled);
    }
    let best = select_best(&pop).expect("checked above");
    let h = problem.horizon;
    Ok(SmcResult {
        controls: (0..n).map(|i| pop.aircraft_controls(best, i)[..h].to_vec()).collect(),
        log_weights: pop.weights(best).to_vec(),
        diagnostics,
        particle: best,
    })
}

/// Aircraft with the fewest surviving particles, used to name a failure
/// when no single column is empty.
fn worst_aircraft(pop: &Population) -> usize {
    let n = pop.aircraft;
    (0..n)
        .min_by_key(|&i| (0..pop.particles).filter(|&p| pop.log_w[p * n + i].is_finite()).count())
        .unwrap_or(0)
}

/// Samples a perturbation from a single Gaussian, used for calibration tests.
pub fn gaussian_draws<R: Rng>(rng: &mut R, sigma: f64, count: usize) -> Vec<f64> {
    let d = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    (0..count).map(|_| d.sample(rng)).collect()
}
