//! Chunk-size and worker-count throughput study.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::runner::run;
use crate::scenario::Scenario;
use crate::smc::{evaluate_population, init_particles, Problem, ProblemAircraft};
use crate::wind::WindGrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub chunk_size: usize,
    pub worker_count: usize,
    pub particles: usize,
    pub mean_step_s: f64,
    pub std_step_s: f64,
    pub particles_per_s: f64,
    /// Timed samples behind the mean.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    /// Every configuration selected the same controls (or weights).
    pub identical: bool,
}

impl BenchReport {
    pub fn get(&self, chunk_size: usize, workers: usize) -> Option<&BenchResult> {
        self.results
            .iter()
            .find(|r| r.chunk_size == chunk_size && r.worker_count == workers)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("chunk_size,chunks,workers,particles,mean_step_s,std_step_s,particles_per_s\n");
        for r in &self.results {
            s.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.1}\n",
                r.chunk_size,
                r.particles.div_ceil(r.chunk_size),
                r.worker_count,
                r.particles,
                r.mean_step_s,
                r.std_step_s,
                r.particles_per_s
            ));
        }
        s
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn check_chunks(particles: usize, chunks: &[usize], workers: &[usize]) -> Result<()> {
    if chunks.is_empty() || workers.is_empty() {
        return Err(Error::config("benchmark needs at least one chunk size and worker count"));
    }
    if let Some(c) = chunks.iter().find(|&&c| c == 0 || particles % c != 0) {
        return Err(Error::config(format!("chunk size {c} does not divide {particles} particles")));
    }
    if workers.contains(&0) {
        return Err(Error::config("worker count must be at least 1"));
    }
    Ok(())
}

/// Runs the receding-horizon loop per configuration, timing the `settled`
/// solves that follow the first entry step. Earlier solves are warm-up.
pub fn run_bench(
    scenario: &Scenario,
    chunks: &[usize],
    workers: &[usize],
    seed: u64,
    settled: usize,
) -> Result<BenchReport> {
    check_chunks(scenario.smc.particles, chunks, workers)?;
    if settled < 3 {
        return Err(Error::config("benchmark needs at least 3 settled steps"));
    }
    let entry = scenario.aircraft.iter().map(|a| a.entry_step).min().unwrap_or(0);
    let mut sc = scenario.clone();
    sc.tma.step_limit = Some(entry + settled);
    let mut results = Vec::new();
    let mut reference = None;
    let mut identical = true;
    for &w in workers {
        for &c in chunks {
            sc.smc.chunk_size = c;
            sc.smc.workers = w;
            let rec = run(&sc, seed)?;
            let times: Vec<f64> = rec
                .steps
                .iter()
                .filter(|s| s.step >= entry && s.present > 0)
                .map(|s| s.solve_time_s)
                .collect();
            if times.len() < 3 {
                return Err(Error::config("benchmark scenario finished before 3 settled steps"));
            }
            let controls: Vec<_> = rec.aircraft.iter().map(|a| a.controls.clone()).collect();
            match &reference {
                None => reference = Some(controls),
                Some(r) => identical &= *r == controls,
            }
            let (mean, std) = mean_std(&times);
            log::info!("bench chunk {c} workers {w}: {mean:.3} s/step");
            results.push(BenchResult {
                chunk_size: c,
                worker_count: w,
                particles: sc.smc.particles,
                mean_step_s: mean,
                std_step_s: std,
                particles_per_s: sc.smc.particles as f64 / mean,
                samples: times.len(),
            });
        }
    }
    Ok(BenchReport { results, identical })
}

/// Times bare evaluation sweeps of `particles` random plans for all
/// aircraft of `scenario` at their entry states. Each configuration is timed
/// over `trials` sweeps after one untimed warm-up sweep.
pub fn evaluation_throughput(
    scenario: &Scenario,
    chunks: &[usize],
    workers: &[usize],
    particles: usize,
    repeats: usize,
    trials: usize,
    seed: u64,
) -> Result<BenchReport> {
    check_chunks(particles, chunks, workers)?;
    if trials == 0 {
        return Err(Error::config("need at least one timed trial"));
    }
    let wind = WindGrid::new(scenario.wind.clone(), scenario.tma.dt_s)?;
    let field = wind.init_state(&mut stream(seed, u64::MAX, 0, Purpose::RealizedWind, 0));
    let problem = Problem {
        aircraft: scenario
            .aircraft
            .iter()
            .enumerate()
            .map(|(i, a)| ProblemAircraft {
                id: i,
                params: scenario.params_for(a),
                goal: a.goal,
                start: a.initial,
                offset: 0,
            })
            .collect(),
        horizon: scenario.tma.horizon,
        dt_s: scenario.tma.dt_s,
        t0_s: 0.0,
        landing: scenario.landing,
        separation: scenario.separation,
        wind: &wind,
        wind_state: &field,
        noise: scenario.population.as_ref(),
    };
    let base = init_particles(&problem, particles, seed, 0);
    let mut results = Vec::new();
    let mut reference: Option<Vec<f64>> = None;
    let mut identical = true;
    for &w in workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        for &c in chunks {
            let mut pop = base.clone();
            let mut times = Vec::with_capacity(trials);
            pool.install(|| {
                evaluate_population(&problem, &mut pop, repeats, repeats, c, seed, 0, 0);
                for t in 0..trials {
                    pop.reset_weights();
                    let started = Instant::now();
                    evaluate_population(&problem, &mut pop, repeats, repeats, c, seed, 0, t as u64);
                    times.push(started.elapsed().as_secs_f64());
                }
            });
            let bits: Vec<f64> = pop.log_w.clone();
            match &reference {
                None => reference = Some(bits),
                Some(r) => identical &= r.iter().zip(&bits).all(|(a, b)| a.to_bits() == b.to_bits()),
            }
            let (mean, std) = mean_std(&times);
            results.push(BenchResult {
                chunk_size: c,
                worker_count: w,
                particles,
                mean_step_s: mean,
                std_step_s: std,
                particles_per_s: particles as f64 / mean,
                samples: trials,
            });
        }
    }
    Ok(BenchReport { results, identical })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn scenario() -> Scenario {
        let text = r#"
            name = "bench"
            [tma]
            horizon = 3
            [smc]
            particles = 64
            iterations = 2
            [smc.schedule]
            base = 1
            scale = 0
            rate = 0
            [[aircraft]]
            id = "A1"
            kind = "arrival"
            entry_bearing_deg = 0
            entry_step = 2
            [[aircraft]]
            id = "D1"
            kind = "departure"
            entry_step = 2
            target_bearing_deg = 90
        "#;
        Scenario::from_toml_str(text, Path::new(".")).unwrap()
    }

    #[test]
    fn bench_is_deterministic_across_layouts() {
        let sc = scenario();
        let rep = run_bench(&sc, &[1, 8, 64], &[1, 2], 5, 3).unwrap();
        assert_eq!(rep.results.len(), 6);
        assert!(rep.identical);
        for r in &rep.results {
            assert!(r.mean_step_s > 0.0 && r.samples == 3);
        }
        assert!(rep.get(8, 2).is_some());
        assert_eq!(rep.to_csv().lines().count(), 7);
    }

    #[test]
    fn evaluation_sweeps_are_layout_independent() {
        let sc = scenario();
        let rep = evaluation_throughput(&sc, &[1, 4, 32], &[1, 3], 64, 2, 2, 9).unwrap();
        assert!(rep.identical);
        assert_eq!(rep.results.len(), 6);
    }

    #[test]
    fn rejects_bad_layouts() {
        let sc = scenario();
        assert!(run_bench(&sc, &[3], &[1], 0, 3).is_err());
        assert!(run_bench(&sc, &[8], &[0], 0, 3).is_err());
        assert!(run_bench(&sc, &[8], &[1], 0, 2).is_err());
    }
}
