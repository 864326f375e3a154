use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tmaopt::fuel::{compare, estimate_all, ingest, write_traces, IngestOptions};
use tmaopt::output::write_run;
use tmaopt::runner::{low_fuel_experiment, run, Completion};
use tmaopt::scenario::{Kind, Scenario};
use tmaopt::traces::{holding_baseline, resample_record, scripted_traces, HoldingConfig};

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios")
}

/// A shipped scenario cut down to test size.
fn small(name: &str) -> Scenario {
    let mut sc = Scenario::load(scenarios_dir().join(name)).unwrap();
    sc.smc.particles = 128;
    sc.smc.iterations = 3;
    sc.smc.chunk_size = 32;
    sc
}

#[test]
fn every_shipped_scenario_loads() {
    let mut names: Vec<_> = fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".toml") && n != "common.toml")
        .collect();
    names.sort();
    assert!(names.len() >= 8, "{names:?}");
    for name in &names {
        let sc = Scenario::load(scenarios_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!sc.aircraft.is_empty(), "{name} has no aircraft");
        for a in &sc.aircraft {
            match a.kind {
                Kind::Arrival => {
                    let r = a.initial.x_m.hypot(a.initial.y_m);
                    assert!((r - sc.tma.radius_m).abs() < 1e-6, "{name}/{} enters at {r} m", a.id);
                }
                Kind::Departure => assert_eq!(a.initial.z_m, 400.0, "{name}/{}", a.id),
            }
        }
    }
    let mixed = Scenario::load(scenarios_dir().join("mixed_10_10.toml")).unwrap();
    let count = |k| mixed.aircraft.iter().filter(|a| a.kind == k).count();
    assert_eq!((count(Kind::Arrival), count(Kind::Departure)), (10, 10));
}

#[test]
fn departure_run_is_reproducible_and_written() {
    let mut sc = small("single_departures.toml").solo(0).unwrap();
    sc.tma.step_limit = Some(8);
    let a = run(&sc, 42).unwrap();
    let b = run(&sc, 42).unwrap();
    assert_eq!(a.aircraft[0].controls, b.aircraft[0].controls);
    assert_eq!(a.aircraft[0].states.len(), 9);
    let burned: f64 = a.aircraft[0].burns_kg.iter().sum();
    assert!((burned - a.aircraft[0].fuel_burned_kg).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    for path in write_run(dir.path(), &a).unwrap() {
        assert!(fs::metadata(&path).unwrap().len() > 0, "{}", path.display());
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
}

#[test]
fn low_fuel_template_produces_a_table() {
    let mut sc = small("low_fuel.toml");
    sc.tma.step_limit = Some(6);
    let table = low_fuel_experiment(&sc, 2, 0).unwrap();
    assert_eq!(table.low_fuel_id, "A_LOW");
    assert_eq!(table.high_fuel_id, "A_HIGH");
    assert_eq!(table.runs.len(), 2);
    assert!(table.low_first + table.high_first <= 2);
}

#[test]
fn simulated_and_baseline_traces_go_through_the_estimators() {
    let mut sc = small("holding.toml");
    sc.aircraft.truncate(1);
    let flights = holding_baseline(&sc, 5, &HoldingConfig::default()).unwrap();
    assert!(flights[0].landed, "scripted baseline should reach the sector");
    assert!(flights[0].hold_s >= 240.0 && flights[0].hold_s < 720.0);
    let mut baseline = scripted_traces(&flights, sc.tma.dt_s, 60.0).unwrap();
    for t in &mut baseline {
        t.id = format!("{}_hold", t.id);
    }
    sc.tma.step_limit = Some(12);
    let rec = run(&sc, 5).unwrap();
    let simulated = resample_record(&rec, sc.tma.dt_s, 60.0).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.csv");
    let mut all = simulated.clone();
    all.extend(baseline.iter().cloned());
    write_traces(fs::File::create(&path).unwrap(), &all).unwrap();
    let read = ingest(&path, &sc.types, &IngestOptions::default()).unwrap();
    assert_eq!(read.traces.len() + read.rejected.len(), all.len());
    assert!(read.traces.iter().any(|t| t.id.ends_with("_hold")));

    let est = estimate_all(&read.traces, &sc.types).unwrap();
    let hold = est.iter().find(|e| e.id.ends_with("_hold")).unwrap();
    // A long hold plus approach burns far more than the first two minutes.
    assert!(hold.mean_kg() > 100.0, "{}", hold.mean_kg());

    let sim_fuel = BTreeMap::from([(hold.id.clone(), flights[0].fuel_burned_kg)]);
    let report = compare(&est, &read.traces, &sim_fuel).unwrap();
    let row = report.rows.iter().find(|r| r.id == hold.id).unwrap();
    assert!(row.saving_pct.is_some());
    // Only one row carries simulated fuel, so the totals carry none.
    assert_eq!(report.totals.simulated_kg.is_none(), read.traces.len() > 1);
}

#[test]
fn step_limit_marks_unfinished_aircraft() {
    let mut sc = small("single_arrivals.toml").solo(0).unwrap();
    sc.tma.step_limit = Some(3);
    let rec = run(&sc, 1).unwrap();
    assert_eq!(rec.aircraft[0].completion, Completion::Unfinished);
    assert!(!rec.all_completed());
    assert!(rec.violations.is_empty());
}
