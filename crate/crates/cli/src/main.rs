use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tmaopt::aircraft::AircraftParams;
use tmaopt::bench::{evaluation_throughput, run_bench};
use tmaopt::fuel::{self, FuelReport, IngestOptions};
use tmaopt::output;
use tmaopt::runner::{run, RunRecord};
use tmaopt::scenario::{Scenario, SCENARIO_KEYS};
use tmaopt::traces::{holding_baseline, resample_record, scripted_traces, HoldingConfig};
use tmaopt::Error;

#[derive(Parser)]
#[command(name = "tmaopt", version, about = "Terminal-area trajectory optimisation and fuel estimation")]
#[command(after_long_help = SCENARIO_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario file (TOML; see `tmaopt help simulate` for the keys)
    #[arg(long)]
    scenario: PathBuf,
    /// Seed for every random stream; drawn from entropy and logged when absent
    #[arg(long)]
    seed: Option<u64>,
    /// Noise cost weight in percent (needs [noise] centres_file)
    #[arg(long)]
    noise_weight: Option<f64>,
    /// Particle count override
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(clap::Args, Default)]
struct LayoutArgs {
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// Closed-loop optimised flights
    Optimised,
    /// Scripted holding-stack arrivals
    Holding,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    /// Full receding-horizon steps after the entry step
    Steps,
    /// Bare population evaluation sweeps
    Sweep,
}

#[derive(Subcommand)]
enum Command {
    /// Run the receding-horizon loop and write trajectories, summary and diagnostics
    #[command(after_long_help = SCENARIO_KEYS)]
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both fuel estimators over a trace file
    EstimateFuel {
        #[arg(long)]
        traces: PathBuf,
        /// Directory of aircraft parameter files
        #[arg(long)]
        params: PathBuf,
        /// Report path; `.csv` writes the table, anything else JSON
        #[arg(long)]
        out: PathBuf,
        /// Also write plot data into this directory
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Compare estimator fuel with simulated fuel per aircraft
    Compare {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// summary.json from `simulate`, or a CSV with columns aircraft_id,fuel_kg
        #[arg(long)]
        simulated: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Time the solver over chunk sizes and worker counts
    Benchmark {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256,512")]
        chunks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers: Vec<usize>,
        #[arg(long, value_enum, default_value = "steps")]
        mode: BenchMode,
        /// Timed steps (steps mode) or sweeps (sweep mode)
        #[arg(long, default_value_t = 3)]
        samples: usize,
        /// Disturbance repeats per sweep (sweep mode)
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// CSV output; printed to stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-simulate a scenario and write sampled traces for the fuel pipeline
    #[command(after_long_help = SCENARIO_KEYS)]
    GenTraces {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Sampling period in seconds, a multiple of the time step
        #[arg(long, default_value_t = 60.0)]
        resample: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "optimised")]
        baseline: Baseline,
        /// Per-aircraft simulated fuel as CSV (aircraft_id,fuel_kg)
        #[arg(long)]
        fuel_out: Option<PathBuf>,
    },
}

enum Failure {
    Config(Error),
    Infeasible(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Simulate { scenario, layout, out } => simulate(&scenario, &layout, &out),
        Command::EstimateFuel { traces, params, out, plots } => {
            let report = fuel_report(&traces, &params, &BTreeMap::new())?;
            write_report(&report, &out, plots.as_deref())
        }
        Command::Compare {
            traces,
            params,
            simulated,
            out,
            plots,
        } => {
            let sim = read_simulated(&simulated)?;
            let report = fuel_report(&traces, &params, &sim)?;
            write_report(&report, &out, plots.as_deref())
        }
        Command::Benchmark {
            scenario,
            chunks,
            workers,
            mode,
            samples,
            repeats,
            out,
        } => {
            let (sc, seed) = load_scenario(&scenario, &LayoutArgs::default())?;
            let report = match mode {
                BenchMode::Steps => run_bench(&sc, &chunks, &workers, seed, samples)?,
                BenchMode::Sweep => {
                    evaluation_throughput(&sc, &chunks, &workers, sc.smc.particles, repeats, samples, seed)?
                }
            };
            if !report.identical {
                log::warn!("configurations disagree on the selected controls");
            }
            match out {
                Some(path) => fs::write(&path, report.to_csv()).map_err(|e| io_error(&path, e))?,
                None => print!("{}", report.to_csv()),
            }
            Ok(())
        }
        Command::GenTraces {
            scenario,
            layout,
            resample,
            out,
            baseline,
            fuel_out,
        } => gen_traces(&scenario, &layout, resample, &out, baseline, fuel_out.as_deref()),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_scenario(args: &ScenarioArgs, layout: &LayoutArgs) -> Result<(Scenario, u64), Error> {
    let mut sc = Scenario::load(&args.scenario)?;
    if let Some(p) = args.particles {
        sc.smc.particles = p;
    }
    if let Some(c) = layout.chunk_size {
        sc.smc.chunk_size = c;
    }
    if let Some(w) = layout.workers {
        sc.smc.workers = w;
    }
    sc.smc.validate()?;
    if let Some(pct) = args.noise_weight {
        sc.set_noise_weight_pct(pct)?;
    }
    let seed = match args.seed {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            log::info!("no --seed given, using seed {s}");
            s
        }
    };
    Ok((sc, seed))
}

fn check_aborted(rec: &RunRecord) -> CmdResult {
    match &rec.aborted {
        Some(a) => Err(Failure::Infeasible(format!(
            "no valid solution for aircraft {} at step {} (iteration {})",
            a.aircraft, a.step, a.iteration
        ))),
        None => Ok(()),
    }
}

fn simulate(args: &ScenarioArgs, layout: &LayoutArgs, out: &Path) -> CmdResult {
    let (sc, seed) = load_scenario(args, layout)?;
    log::info!("scenario {} with {} aircraft, seed {seed}", sc.name, sc.aircraft.len());
    let rec = run(&sc, seed)?;
    output::write_run(out, &rec)?;
    for a in &rec.aircraft {
        log::info!(
            "{}: {:?} at step {:?}, fuel {:.1} kg",
            a.id,
            a.completion,
            a.completion_step,
            a.fuel_burned_kg
        );
    }
    if !rec.violations.is_empty() {
        log::warn!("{} realised constraint violations", rec.violations.len());
    }
    check_aborted(&rec)
}

fn gen_traces(
    args: &ScenarioArgs,
    layout: &LayoutArgs,
    period: f64,
    out: &Path,
    baseline: Baseline,
    fuel_out: Option<&Path>,
) -> CmdResult {
    let (sc, seed) = load_scenario(args, layout)?;
    let (traces, burned) = match baseline {
        Baseline::Optimised => {
            let rec = run(&sc, seed)?;
            check_aborted(&rec)?;
            let burned: Vec<(String, f64)> =
                rec.aircraft.iter().map(|a| (a.id.clone(), a.fuel_burned_kg)).collect();
            (resample_record(&rec, sc.tma.dt_s, period)?, burned)
        }
        Baseline::Holding => {
            let flights = holding_baseline(&sc, seed, &HoldingConfig::default())?;
            for f in flights.iter().filter(|f| !f.landed) {
                log::warn!("{} did not land after holding {:.0} s", f.id, f.hold_s);
            }
            let burned = flights.iter().map(|f| (f.id.clone(), f.fuel_burned_kg)).collect();
            (scripted_traces(&flights, sc.tma.dt_s, period)?, burned)
        }
    };
    let file = fs::File::create(out).map_err(|e| io_error(out, e))?;
    fuel::write_traces(file, &traces)?;
    log::info!("wrote {} traces to {}", traces.len(), out.display());
    if let Some(path) = fuel_out {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["aircraft_id", "fuel_kg"])?;
        for (id, kg) in burned {
            w.write_record([id, kg.to_string()])?;
        }
        w.flush().map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

fn fuel_report(traces: &Path, params: &Path, simulated: &BTreeMap<String, f64>) -> Result<FuelReport, Error> {
    let params = AircraftParams::load_dir(params)?;
    let ingested = fuel::ingest(traces, &params, &IngestOptions::default())?;
    for r in &ingested.rejected {
        log::warn!("rejected trace {}: {}", r.id, r.reason);
    }
    let estimates = fuel::estimate_all(&ingested.traces, &params)?;
    fuel::compare(&estimates, &ingested.traces, simulated)
}

fn write_report(report: &FuelReport, out: &Path, plots: Option<&Path>) -> CmdResult {
    if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        output::write_fuel_csv(out, report)?;
    } else {
        output::write_json(out, report)?;
    }
    if let Some(dir) = plots {
        output::write_fuel_plots(dir, report)?;
    }
    let t = &report.totals;
    match t.saving_pct {
        Some(s) => log::info!("total mean estimate {:.1} kg, simulated {:.1} kg, saving {s:.2}%", t.mean_kg, t.simulated_kg.unwrap_or(0.0)),
        None => log::info!("total mean estimate {:.1} kg over {} aircraft", t.mean_kg, report.rows.len()),
    }
    Ok(())
}

/// Reads simulated fuel per aircraft from a run summary or an id/fuel CSV.
fn read_simulated(path: &Path) -> Result<BTreeMap<String, f64>, Error> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut map = BTreeMap::new();
    if is_csv {
        #[derive(serde::Deserialize)]
        struct Row {
            aircraft_id: String,
            fuel_kg: f64,
        }
        let mut rdr = csv::Reader::from_path(path)?;
        for row in rdr.deserialize() {
            let r: Row = row?;
            map.insert(r.aircraft_id, r.fuel_kg);
        }
    } else {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let aircraft = v["aircraft"].as_array().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: "expected a run summary with an `aircraft` list".into(),
        })?;
        for a in aircraft {
            match (a["id"].as_str(), a["fuel_burned_kg"].as_f64()) {
                (Some(id), Some(kg)) => {
                    map.insert(id.to_string(), kg);
                }
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: "aircraft entry without id or fuel_burned_kg".into(),
                    })
                }
            }
        }
    }
    Ok(map)
}
