//! Run artefacts: trajectory CSV, JSON summary, per-iteration diagnostics
//! and whitespace-separated plot data.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fuel::FuelReport;
use crate::runner::{Abort, AuditViolation, Completion, RunRecord};
use crate::scenario::Kind;

#[derive(Debug, Clone, Serialize)]
pub struct AircraftSummary {
    pub id: String,
    pub kind: Kind,
    #[serde(rename = "type")]
    pub type_designator: String,
    pub entry_step: usize,
    pub completion: Completion,
    pub completion_step: Option<usize>,
    pub initial_mass_kg: f64,
    pub final_mass_kg: f64,
    pub fuel_burned_kg: f64,
    pub co2_kg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub steps: usize,
    pub max_concurrency: usize,
    pub total_fuel_kg: f64,
    pub aircraft: Vec<AircraftSummary>,
    pub violations: Vec<AuditViolation>,
    pub aborted: Option<Abort>,
}

pub fn summarize(rec: &RunRecord) -> RunSummary {
    let aircraft: Vec<AircraftSummary> = rec
        .aircraft
        .iter()
        .map(|a| AircraftSummary {
            id: a.id.clone(),
            kind: a.kind,
            type_designator: a.type_designator.clone(),
            entry_step: a.entry_step,
            completion: a.completion,
            completion_step: a.completion_step,
            initial_mass_kg: a.initial_mass(),
            final_mass_kg: a.final_state().map(|s| s.mass_kg).unwrap_or(0.0),
            fuel_burned_kg: a.fuel_burned_kg,
            co2_kg: crate::fuel::co2_kg(a.fuel_burned_kg),
        })
        .collect();
    RunSummary {
        scenario: rec.scenario.clone(),
        seed: rec.seed,
        steps: rec.steps.len(),
        max_concurrency: rec.max_concurrency,
        total_fuel_kg: aircraft.iter().map(|a| a.fuel_burned_kg).sum(),
        aircraft,
        violations: rec.violations.clone(),
        aborted: rec.aborted.clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectories(path: &Path, rec: &RunRecord) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "step,aircraft_id,x_m,y_m,z_m,v_s_mps,chi_rad,mass_kg,thrust_n,bank_rad,climb_rad").map_err(io)?;
    for a in &rec.aircraft {
        for (k, p) in a.states.iter().enumerate() {
            let s = &p.state;
            write!(w, "{},{},{},{},{},{},{},{}", p.step, a.id, s.x_m, s.y_m, s.z_m, s.v_s_mps, s.chi_rad, s.mass_kg)
                .map_err(io)?;
            match a.controls.get(k) {
                Some(u) => writeln!(w, ",{},{},{}", u.thrust_n, u.bank_rad, u.climb_rad),
                None => writeln!(w, ",,,"),
            }
            .map_err(io)?;
        }
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn write_diagnostics(path: &Path, rec: &RunRecord) -> Result<()> {
    let mut w = create(path)?;
    for d in &rec.diagnostics {
        serde_json::to_writer(&mut w, d)?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// One gnuplot index block per aircraft: `x_km y_km z_m`.
pub fn write_trajectory_plot(path: &Path, rec: &RunRecord) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for a in &rec.aircraft {
        writeln!(w, "# {} {:?}", a.id, a.kind).map_err(io)?;
        for p in &a.states {
            writeln!(w, "{:.4} {:.4} {:.2}", p.state.x_m / 1000.0, p.state.y_m / 1000.0, p.state.z_m).map_err(io)?;
        }
        writeln!(w, "\n").map_err(io)?;
    }
    finish(w, path)
}

/// Writes every artefact of a run into `dir` and returns the file paths.
pub fn write_run(dir: &Path, rec: &RunRecord) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [
        dir.join("trajectories.csv"),
        dir.join("summary.json"),
        dir.join("diagnostics.jsonl"),
        dir.join("trajectories.dat"),
    ];
    write_trajectories(&paths[0], rec)?;
    write_json(&paths[1], &summarize(rec))?;
    write_diagnostics(&paths[2], rec)?;
    write_trajectory_plot(&paths[3], rec)?;
    Ok(paths.to_vec())
}

pub fn write_fuel_csv(path: &Path, report: &FuelReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for row in report.rows.iter().chain(std::iter::once(&report.totals)) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fuel comparison bars (`index f1 f2 mean simulated`) plus the residual
/// wind scatter.
pub fn write_fuel_plots(dir: &Path, report: &FuelReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bars = dir.join("fuel_comparison.dat");
    let mut w = create(&bars)?;
    let io = |p: &Path, e| Error::io(p, e);
    writeln!(w, "# index id f1_kg f2_kg mean_kg simulated_kg").map_err(|e| io(&bars, e))?;
    for (i, r) in report.rows.iter().enumerate() {
        let sim = r.simulated_kg.map(|s| format!("{s:.3}")).unwrap_or_else(|| "NaN".into());
        writeln!(w, "{i} {} {:.3} {:.3} {:.3} {sim}", r.id, r.f1_kg, r.f2_kg, r.mean_kg).map_err(|e| io(&bars, e))?;
    }
    finish(w, &bars)?;
    let wind = dir.join("residual_wind.dat");
    let mut w = create(&wind)?;
    writeln!(w, "# t_s w_x w_y id").map_err(|e| io(&wind, e))?;
    for r in &report.residual_wind {
        writeln!(w, "{} {:.6} {:.6} {}", r.t_s, r.w_x, r.w_y, r.id).map_err(|e| io(&wind, e))?;
    }
    finish(w, &wind)?;
    Ok(vec![bars, wind])
}
