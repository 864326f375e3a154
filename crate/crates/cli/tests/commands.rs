use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tmaopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmaopt"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    let aircraft = data_dir().join("aircraft");
    let text = format!(
        "name = \"cli\"\naircraft_dir = {:?}\n[smc]\nparticles = 64\niterations = 2\nchunk_size = 16\n{body}",
        aircraft.display().to_string()
    );
    fs::write(&path, text).unwrap();
    path
}

const TWO_DEPARTURES: &str = r#"
[tma]
step_limit = 6
[[aircraft]]
id = "D1"
kind = "departure"
target_bearing_deg = 180
[[aircraft]]
id = "D2"
kind = "departure"
entry_step = 3
x_m = -3000
y_m = 9000
target_bearing_deg = 90
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_scenario_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmaopt(&["simulate", "--scenario", "/nonexistent/x.toml", "--seed", "1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn noise_weight_without_centres_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let out = tmaopt(&["simulate", "--scenario", s(&sc), "--seed", "1", "--out", s(dir.path()), "--noise-weight", "20"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_artefacts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b, &a] {
        let o = tmaopt(&["simulate", "--scenario", s(&sc), "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["trajectories.csv", "summary.json", "diagnostics.jsonl", "trajectories.dat"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} empty");
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs between identical runs");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["aircraft"].as_array().unwrap().len(), 2);
}

#[test]
fn overrides_reach_the_optimiser() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let bad = tmaopt(&["simulate", "--scenario", s(&sc), "--seed", "1", "--out", s(dir.path()), "--workers", "0"]);
    assert_eq!(bad.status.code(), Some(1));
    let ok = tmaopt(&[
        "simulate", "--scenario", s(&sc), "--seed", "1", "--out", s(dir.path()), "--particles", "32", "--chunk-size", "8",
        "--workers", "2",
    ]);
    assert!(ok.status.success());
}

#[test]
fn conflicting_entries_exit_with_infeasible_code() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[tma]
step_limit = 4
[[aircraft]]
id = "D1"
kind = "departure"
target_bearing_deg = 180
[[aircraft]]
id = "D2"
kind = "departure"
target_bearing_deg = 180
"#;
    let sc = write_scenario(dir.path(), body);
    let out = tmaopt(&["simulate", "--scenario", s(&sc), "--seed", "1", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("step 0") && err.contains("aircraft D"), "{err}");
    assert!(dir.path().join("o/summary.json").exists());
}

#[test]
fn seed_is_drawn_and_logged_when_absent() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let out = Command::new(env!("CARGO_BIN_EXE_tmaopt"))
        .args(["simulate", "--scenario", s(&sc), "--out", s(dir.path())])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("using seed"));
}

#[test]
fn traces_feed_the_fuel_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let coarse = dir.path().join("coarse.csv");
    let fine = dir.path().join("fine.csv");
    let again = dir.path().join("again.csv");
    let fuel = dir.path().join("fuel.csv");
    let gen = |out: &Path, period: &str, extra: &[&str]| {
        let mut args = vec!["gen-traces", "--scenario", s(&sc), "--seed", "3", "--resample", period, "--out", s(out)];
        args.extend_from_slice(extra);
        let o = tmaopt(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out).unwrap()
    };
    let c = gen(&coarse, "30", &["--fuel-out", s(&fuel)]);
    let f = gen(&fine, "10", &[]);
    assert_eq!(c, gen(&again, "30", &[]));
    assert!(f.lines().count() > c.lines().count());
    assert!(c.starts_with("t_s,aircraft_id,type,flag,x_m,y_m,z_m,vs_mps,chi_deg"));

    let bad = tmaopt(&["gen-traces", "--scenario", s(&sc), "--seed", "3", "--resample", "15", "--out", s(&coarse)]);
    assert_eq!(bad.status.code(), Some(1));

    let params = data_dir().join("aircraft");
    let json = dir.path().join("report.json");
    let o = tmaopt(&["estimate-fuel", "--traces", s(&fine), "--params", s(&params), "--out", s(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    assert!(report["totals"]["mean_kg"].as_f64().unwrap() > 0.0);
    assert!(report["totals"]["saving_pct"].is_null());

    let table = dir.path().join("compare.csv");
    let plots = dir.path().join("plots");
    let o = tmaopt(&[
        "compare", "--traces", s(&fine), "--params", s(&params), "--simulated", s(&fuel), "--out", s(&table), "--plots",
        s(&plots),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&table).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(plots.join("fuel_comparison.dat").exists() && plots.join("residual_wind.dat").exists());
}

#[test]
fn compare_reads_run_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let run_dir = dir.path().join("run");
    let traces = dir.path().join("t.csv");
    assert!(tmaopt(&["simulate", "--scenario", s(&sc), "--seed", "2", "--out", s(&run_dir)]).status.success());
    assert!(tmaopt(&["gen-traces", "--scenario", s(&sc), "--seed", "2", "--resample", "10", "--out", s(&traces)])
        .status
        .success());
    let out = dir.path().join("r.json");
    let params = data_dir().join("aircraft");
    let o = tmaopt(&[
        "compare", "--traces", s(&traces), "--params", s(&params), "--simulated", s(&run_dir.join("summary.json")), "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert!(row["simulated_kg"].as_f64().is_some());
    }
}

#[test]
fn benchmark_emits_one_row_per_layout() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), TWO_DEPARTURES);
    let csv = dir.path().join("bench.csv");
    let o = tmaopt(&[
        "benchmark", "--scenario", s(&sc), "--seed", "1", "--chunks", "1,16,64", "--workers", "1,2", "--out", s(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("chunk_size,chunks,workers,particles,mean_step_s,std_step_s,particles_per_s"));
    assert_eq!(text.lines().count(), 7);
    let sweep = tmaopt(&[
        "benchmark", "--scenario", s(&sc), "--seed", "1", "--chunks", "8,32", "--mode", "sweep", "--samples", "2",
    ]);
    assert!(sweep.status.success());
    assert_eq!(String::from_utf8_lossy(&sweep.stdout).lines().count(), 3);
}

#[test]
fn help_documents_scenario_keys() {
    let out = tmaopt(&["simulate", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["[tma]", "[wind]", "[smc]", "[noise]", "[[aircraft]]", "entry_bearing_deg", "max_draws"] {
        assert!(text.contains(key), "help lacks {key}");
    }
}
