//! Fuel burn inferred from sampled flight traces: two reverse estimators,
//! their comparison against simulated burn, and trace-file ingestion.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircraft::{fuel_burn_coeff, lift_drag, AircraftParams, AircraftState, GRAVITY};
use crate::error::{Error, Result};
use crate::scenario::Kind;
use crate::units::wrap_pi;

/// kg of CO2 per kg of fuel burnt.
pub const CO2_PER_FUEL: f64 = 3.15;

pub const TRACE_HEADER: [&str; 9] = [
    "t_s",
    "aircraft_id",
    "type",
    "flag",
    "x_m",
    "y_m",
    "z_m",
    "vs_mps",
    "chi_deg",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub v_s_mps: f64,
    /// Heading from +x counter-clockwise.
    pub chi_rad: f64,
}

impl TraceSample {
    pub fn from_state(t_s: f64, s: &AircraftState) -> Self {
        TraceSample {
            t_s,
            x_m: s.x_m,
            y_m: s.y_m,
            z_m: s.z_m,
            v_s_mps: s.v_s_mps,
            chi_rad: s.chi_rad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightTrace {
    pub id: String,
    pub type_designator: String,
    pub kind: Kind,
    pub samples: Vec<TraceSample>,
    pub initial_mass_kg: f64,
}

impl FlightTrace {
    /// Estimators need at least one interval and strictly increasing time.
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::config(format!("trace {}: needs at least 2 samples", self.id)));
        }
        if self.samples.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            return Err(Error::config(format!("trace {}: time must strictly increase", self.id)));
        }
        if !(self.initial_mass_kg > 0.0) {
            return Err(Error::config(format!("trace {}: initial mass must be positive", self.id)));
        }
        Ok(())
    }
}

/// Initial mass from the load assumptions: every aircraft carries its
/// maximum take-off load; departures hold a full tank, arrivals 20% of it.
pub fn assumed_initial_mass(kind: Kind, params: &AircraftParams) -> f64 {
    match kind {
        Kind::Departure => params.max_takeoff_mass_kg,
        Kind::Arrival => params.max_takeoff_mass_kg - 0.8 * params.fuel_capacity_kg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepFlag {
    /// `|dz / (dt v)| > 1`; climb angle clamped to the envelope limit.
    ClimbClamped,
    /// No displacement between samples; the interval is skipped.
    ZeroDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuelEstimate {
    /// Per-interval burn, never negative.
    pub burns_kg: Vec<f64>,
    /// Mass at each sample, starting from the trace's initial mass.
    pub masses_kg: Vec<f64>,
    pub thrust_n: Vec<f64>,
    /// Estimate 1 only: residual ground-velocity unexplained by airspeed.
    pub wind: Vec<(f64, f64)>,
    pub flags: Vec<(usize, StepFlag)>,
    pub total_kg: f64,
}

impl FuelEstimate {
    fn with_capacity(n: usize, m0: f64) -> Self {
        let mut masses_kg = Vec::with_capacity(n + 1);
        masses_kg.push(m0);
        FuelEstimate {
            burns_kg: Vec::with_capacity(n),
            masses_kg,
            thrust_n: Vec::with_capacity(n),
            wind: Vec::new(),
            flags: Vec::new(),
            total_kg: 0.0,
        }
    }

    fn push(&mut self, thrust: f64, burn: f64) {
        let burn = burn.max(0.0);
        let m = *self.masses_kg.last().unwrap();
        self.thrust_n.push(thrust);
        self.burns_kg.push(burn);
        self.masses_kg.push(m - burn);
        self.total_kg += burn;
    }
}

fn climb_angle(dz: f64, dist: f64, params: &AircraftParams, id: &str, k: usize) -> (f64, bool) {
    let s = dz / dist;
    if s.abs() > 1.0 {
        warn!("trace {id} interval {k}: climb ratio {s:.3} exceeds 1, clamping");
        (params.gamma_max_rad.copysign(s), true)
    } else {
        (s.asin(), false)
    }
}

fn drag_at(z: f64, v: f64, m: f64, bank: f64, params: &AircraftParams) -> Result<f64> {
    let state = AircraftState {
        z_m: z,
        v_s_mps: v,
        mass_kg: m,
        ..Default::default()
    };
    let rho = params.atmosphere.density(z);
    Ok(lift_drag(&state, bank, params, rho)?.1)
}

/// Reverse dynamics: the aircraft flies its recorded heading and airspeed,
/// reaches the next recorded airspeed, and any position mismatch is wind.
/// Drag uses the coordinated-turn bank that produces the recorded heading
/// change over the interval.
pub fn estimate1(trace: &FlightTrace, params: &AircraftParams) -> Result<FuelEstimate> {
    trace.validate()?;
    let n = trace.samples.len() - 1;
    let mut out = FuelEstimate::with_capacity(n, trace.initial_mass_kg);
    out.wind.reserve(n);
    for (k, w) in trace.samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t_s - a.t_s;
        let v = a.v_s_mps;
        let m = out.masses_kg[k];
        let eta = fuel_burn_coeff(v, params);
        let (gamma, clamped) = climb_angle(b.z_m - a.z_m, dt * v, params, &trace.id, k);
        if clamped {
            out.flags.push((k, StepFlag::ClimbClamped));
        }
        let (sin_chi, cos_chi) = a.chi_rad.sin_cos();
        let (sin_g, cos_g) = gamma.sin_cos();
        let wx = (b.x_m - a.x_m) / dt - v * cos_chi * cos_g;
        let wy = (b.y_m - a.y_m) / dt - v * sin_chi * cos_g;
        out.wind.push((wx, wy));
        let bank = (wrap_pi(b.chi_rad - a.chi_rad) * v / (GRAVITY * dt)).atan();
        let drag = drag_at(a.z_m, v, m, bank, params)?;
        let thrust = m * (b.v_s_mps - v) / dt + drag + m * GRAVITY * sin_g;
        out.push(thrust, dt * eta * thrust);
    }
    Ok(out)
}

/// Dead reckoning: straight-line distance gives the airspeed, the
/// displacement direction the track, and the track/heading mismatch a bank.
pub fn estimate2(trace: &FlightTrace, params: &AircraftParams) -> Result<FuelEstimate> {
    trace.validate()?;
    let n = trace.samples.len() - 1;
    let mut out = FuelEstimate::with_capacity(n, trace.initial_mass_kg);
    for (k, w) in trace.samples.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t_s - a.t_s;
        let (dx, dy, dz) = (b.x_m - a.x_m, b.y_m - a.y_m, b.z_m - a.z_m);
        let d = (dx * dx + dy * dy + dz * dz).sqrt();
        let m = out.masses_kg[k];
        if d == 0.0 {
            warn!("trace {} interval {k}: zero displacement, skipped", trace.id);
            out.flags.push((k, StepFlag::ZeroDistance));
            out.push(0.0, 0.0);
            continue;
        }
        let v_hat = d / dt;
        let eta = fuel_burn_coeff(v_hat, params);
        let (gamma, clamped) = climb_angle(dz, d, params, &trace.id, k);
        if clamped {
            out.flags.push((k, StepFlag::ClimbClamped));
        }
        let track = dy.atan2(dx);
        let dchi = wrap_pi(track - a.chi_rad);
        let bank = (dchi * v_hat / (GRAVITY * dt)).atan();
        let drag = drag_at(a.z_m, v_hat, m, bank, params)?;
        let thrust = m * (b.v_s_mps - v_hat) / dt + drag + m * GRAVITY * gamma.sin();
        out.push(thrust, dt * eta * thrust);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEstimate {
    pub id: String,
    pub kind: Kind,
    pub first: FuelEstimate,
    pub second: FuelEstimate,
}

impl TraceEstimate {
    pub fn mean_kg(&self) -> f64 {
        0.5 * (self.first.total_kg + self.second.total_kg)
    }
}

/// Runs both estimators over every trace in parallel.
pub fn estimate_all(
    traces: &[FlightTrace],
    params: &HashMap<String, AircraftParams>,
) -> Result<Vec<TraceEstimate>> {
    traces
        .par_iter()
        .map(|t| {
            let p = params.get(&t.type_designator).ok_or_else(|| {
                Error::config(format!("trace {}: no parameters for type {}", t.id, t.type_designator))
            })?;
            Ok(TraceEstimate {
                id: t.id.clone(),
                kind: t.kind,
                first: estimate1(t, p)?,
                second: estimate2(t, p)?,
            })
        })
        .collect()
}

/// `100 (mean - simulated) / mean`; `None` when the mean is zero.
pub fn saving_pct(simulated_kg: f64, mean_kg: f64) -> Option<f64> {
    (mean_kg != 0.0).then(|| 100.0 * (mean_kg - simulated_kg) / mean_kg)
}

pub fn co2_kg(fuel_kg: f64) -> f64 {
    CO2_PER_FUEL * fuel_kg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuelRow {
    pub id: String,
    pub f1_kg: f64,
    pub f2_kg: f64,
    pub mean_kg: f64,
    pub simulated_kg: Option<f64>,
    pub saving_pct: Option<f64>,
    pub co2_mean_kg: f64,
    pub co2_simulated_kg: Option<f64>,
}

impl FuelRow {
    pub fn new(id: impl Into<String>, f1: f64, f2: f64, simulated: Option<f64>) -> Self {
        let mean = 0.5 * (f1 + f2);
        FuelRow {
            id: id.into(),
            f1_kg: f1,
            f2_kg: f2,
            mean_kg: mean,
            simulated_kg: simulated,
            saving_pct: simulated.and_then(|s| saving_pct(s, mean)),
            co2_mean_kg: co2_kg(mean),
            co2_simulated_kg: simulated.map(co2_kg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindResidual {
    pub id: String,
    pub t_s: f64,
    pub w_x: f64,
    pub w_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuelReport {
    pub rows: Vec<FuelRow>,
    pub totals: FuelRow,
    pub residual_wind: Vec<WindResidual>,
}

/// Builds per-aircraft and total rows. Simulated fuel is optional per id,
/// and the totals carry a simulated figure only when every row has one.
pub fn compare(
    estimates: &[TraceEstimate],
    traces: &[FlightTrace],
    simulated: &BTreeMap<String, f64>,
) -> Result<FuelReport> {
    for id in simulated.keys() {
        if !estimates.iter().any(|e| &e.id == id) {
            return Err(Error::config(format!("simulated fuel for unknown aircraft {id}")));
        }
    }
    let rows: Vec<FuelRow> = estimates
        .iter()
        .map(|e| FuelRow::new(&e.id, e.first.total_kg, e.second.total_kg, simulated.get(&e.id).copied()))
        .collect();
    let f1: f64 = rows.iter().map(|r| r.f1_kg).sum();
    let f2: f64 = rows.iter().map(|r| r.f2_kg).sum();
    let sim = rows
        .iter()
        .map(|r| r.simulated_kg)
        .sum::<Option<f64>>()
        .filter(|_| !rows.is_empty());
    let totals = FuelRow::new("total", f1, f2, sim);

    let mut residual_wind = Vec::new();
    for e in estimates {
        let times = traces.iter().find(|t| t.id == e.id).map(|t| &t.samples);
        for (k, &(w_x, w_y)) in e.first.wind.iter().enumerate() {
            let t_s = times.map(|s| s[k].t_s).unwrap_or(k as f64);
            residual_wind.push(WindResidual {
                id: e.id.clone(),
                t_s,
                w_x,
                w_y,
            });
        }
    }
    Ok(FuelReport {
        rows,
        totals,
        residual_wind,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub aircraft_id: String,
    #[serde(rename = "type")]
    pub type_designator: String,
    /// `arrival`, `departure`, or empty to classify from the altitude trend.
    pub flag: String,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub vs_mps: f64,
    pub chi_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Samples below this altitude are stripped from both ends.
    pub min_altitude_m: f64,
    /// Samples beyond this range from the runway are dropped.
    pub radius_m: f64,
    pub min_samples: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            min_altitude_m: 100.0,
            radius_m: 50_000.0,
            min_samples: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejected {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub traces: Vec<FlightTrace>,
    pub rejected: Vec<Rejected>,
}

fn parse_flag(flag: &str) -> Option<Option<Kind>> {
    match flag.trim().to_ascii_lowercase().as_str() {
        "" | "auto" => Some(None),
        "arrival" | "a" | "arr" => Some(Some(Kind::Arrival)),
        "departure" | "d" | "dep" => Some(Some(Kind::Departure)),
        _ => None,
    }
}

/// Reads a trace file: rows grouped by aircraft id in order of first
/// appearance, filtered, classified and given an initial mass.
pub fn ingest(
    path: impl AsRef<Path>,
    params: &HashMap<String, AircraftParams>,
    opts: &IngestOptions,
) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, params, opts)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    params: &HashMap<String, AircraftParams>,
    opts: &IngestOptions,
) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected header {}, got {}", TRACE_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    struct Group {
        type_designator: String,
        flag: Option<Kind>,
        samples: Vec<TraceSample>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let row: TraceRow = rec.deserialize(Some(&header)).map_err(|e| row_err(e.to_string()))?;
        let values = [row.t_s, row.x_m, row.y_m, row.z_m, row.vs_mps, row.chi_deg];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(row_err("non-finite value".into()));
        }
        let flag = parse_flag(&row.flag).ok_or_else(|| row_err(format!("unknown flag {:?}", row.flag)))?;
        let g = groups.entry(row.aircraft_id.clone()).or_insert_with(|| {
            order.push(row.aircraft_id.clone());
            Group {
                type_designator: row.type_designator.clone(),
                flag,
                samples: Vec::new(),
            }
        });
        if g.type_designator != row.type_designator {
            return Err(row_err(format!("aircraft {} changes type", row.aircraft_id)));
        }
        if flag.is_some() {
            g.flag = flag;
        }
        g.samples.push(TraceSample {
            t_s: row.t_s,
            x_m: row.x_m,
            y_m: row.y_m,
            z_m: row.z_m,
            v_s_mps: row.vs_mps,
            chi_rad: row.chi_deg.to_radians(),
        });
    }

    let mut out = Ingested {
        traces: Vec::new(),
        rejected: Vec::new(),
    };
    for id in order {
        let g = groups.remove(&id).unwrap();
        let mut reject = |reason: &str| {
            warn!("trace {id} rejected: {reason}");
            out.rejected.push(Rejected {
                id: id.clone(),
                reason: reason.to_string(),
            });
        };
        let Some(p) = params.get(&g.type_designator) else {
            reject("unknown aircraft type");
            continue;
        };
        let mut samples: Vec<TraceSample> =
            g.samples.into_iter().filter(|s| s.x_m.hypot(s.y_m) <= opts.radius_m).collect();
        let start = samples.iter().position(|s| s.z_m >= opts.min_altitude_m);
        let end = samples.iter().rposition(|s| s.z_m >= opts.min_altitude_m);
        samples = match (start, end) {
            (Some(a), Some(b)) => samples[a..=b].to_vec(),
            _ => Vec::new(),
        };
        if samples.len() < opts.min_samples {
            reject("too few intervals");
            continue;
        }
        if samples.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
            reject("time not strictly increasing");
            continue;
        }
        let kind = g.flag.unwrap_or_else(|| {
            if samples.last().unwrap().z_m < samples[0].z_m {
                Kind::Arrival
            } else {
                Kind::Departure
            }
        });
        out.traces.push(FlightTrace {
            initial_mass_kg: assumed_initial_mass(kind, p),
            id,
            type_designator: g.type_designator,
            kind,
            samples,
        });
    }
    Ok(out)
}

/// Writes traces in the ingestible CSV layout with an explicit flag.
pub fn write_traces<W: std::io::Write>(writer: W, traces: &[FlightTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in traces {
        let flag = match t.kind {
            Kind::Arrival => "arrival",
            Kind::Departure => "departure",
        };
        for s in &t.samples {
            w.serialize(TraceRow {
                t_s: s.t_s,
                aircraft_id: t.id.clone(),
                type_designator: t.type_designator.clone(),
                flag: flag.to_string(),
                x_m: s.x_m,
                y_m: s.y_m,
                z_m: s.z_m,
                vs_mps: s.v_s_mps,
                chi_deg: s.chi_rad.to_degrees(),
            })?;
        }
    }
    if traces.is_empty() {
        w.write_record(TRACE_HEADER)?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aircraft::{step, ControlInput};
    use proptest::prelude::*;

    fn params() -> AircraftParams {
        AircraftParams::a320()
    }

    /// Forward-simulates fixed controls under a constant wind and records
    /// every state, so each trace interval is exactly one model step.
    fn simulated(controls: &[ControlInput], wind: (f64, f64), dt: f64) -> (FlightTrace, Vec<f64>) {
        let p = params();
        let mut s = AircraftState {
            x_m: 12_000.0,
            y_m: -4_000.0,
            z_m: 3_000.0,
            v_s_mps: 120.0,
            chi_rad: 2.5,
            mass_kg: 66_000.0,
        };
        let mut samples = vec![TraceSample::from_state(0.0, &s)];
        let mut masses = vec![s.mass_kg];
        for (k, u) in controls.iter().enumerate() {
            s = step(&s, u, wind, dt, &p, fuel_burn_coeff(s.v_s_mps, &p)).unwrap();
            samples.push(TraceSample::from_state((k + 1) as f64 * dt, &s));
            masses.push(s.mass_kg);
        }
        let trace = FlightTrace {
            id: "sim".into(),
            type_designator: "A320".into(),
            kind: Kind::Arrival,
            samples,
            initial_mass_kg: masses[0],
        };
        (trace, masses)
    }

    fn straight(n: usize, dt: f64, climb: f64) -> FlightTrace {
        let v = 130.0;
        let chi: f64 = 0.7;
        let samples = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                TraceSample {
                    t_s: t,
                    x_m: -5_000.0 + v * t * chi.cos() * climb.cos(),
                    y_m: 2_000.0 + v * t * chi.sin() * climb.cos(),
                    z_m: 2_000.0 + v * t * climb.sin(),
                    v_s_mps: v,
                    chi_rad: chi,
                }
            })
            .collect();
        FlightTrace {
            id: "straight".into(),
            type_designator: "A320".into(),
            kind: Kind::Departure,
            samples,
            initial_mass_kg: 70_000.0,
        }
    }

    #[test]
    fn roundtrip_recovers_wind_and_mass() {
        let controls: Vec<ControlInput> = (0..20)
            .map(|k| ControlInput {
                thrust_n: 30_000.0 + 2_000.0 * (k % 5) as f64,
                bank_rad: 0.3 * ((k as f64) * 0.7).sin(),
                climb_rad: -0.04 + 0.005 * (k % 4) as f64,
            })
            .collect();
        let wind = (4.5, -2.25);
        let (trace, masses) = simulated(&controls, wind, 10.0);
        let est = estimate1(&trace, &params()).unwrap();
        for &(wx, wy) in &est.wind {
            assert!((wx - wind.0).abs() < 1e-6 && (wy - wind.1).abs() < 1e-6, "{wx} {wy}");
        }
        for (a, b) in est.masses_kg.iter().zip(&masses) {
            assert!((a - b).abs() / b < 1e-9, "{a} vs {b}");
        }
        for (t, u) in est.thrust_n.iter().zip(&controls) {
            assert!((t - u.thrust_n).abs() < 1e-3);
        }
    }

    #[test]
    fn hover_residual_is_minus_airspeed() {
        let s = TraceSample {
            t_s: 0.0,
            x_m: 100.0,
            y_m: 100.0,
            z_m: 1000.0,
            v_s_mps: 90.0,
            chi_rad: 1.0,
        };
        let trace = FlightTrace {
            id: "hover".into(),
            type_designator: "A320".into(),
            kind: Kind::Arrival,
            samples: vec![s, TraceSample { t_s: 60.0, ..s }],
            initial_mass_kg: 65_000.0,
        };
        let est = estimate1(&trace, &params()).unwrap();
        let (wx, wy) = est.wind[0];
        assert!((wx + 90.0 * 1.0f64.cos()).abs() < 1e-12);
        assert!((wy + 90.0 * 1.0f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn zero_thrust_step_burns_nothing() {
        let zero = ControlInput {
            thrust_n: 0.0,
            bank_rad: 0.1,
            climb_rad: -0.05,
        };
        let (trace, _) = simulated(&[zero; 3], (0.0, 0.0), 10.0);
        let est = estimate1(&trace, &params()).unwrap();
        for b in &est.burns_kg {
            assert!(b.abs() < 1e-9);
        }
    }

    #[test]
    fn estimators_agree_on_trimmed_straight_flight() {
        for climb in [0.0, 0.03, -0.05] {
            let trace = straight(8, 60.0, climb);
            let p = params();
            let f1 = estimate1(&trace, &p).unwrap().total_kg;
            let f2 = estimate2(&trace, &p).unwrap().total_kg;
            assert!(f1 > 0.0);
            assert!((f1 - f2).abs() / f1 <= 1e-6, "{f1} {f2}");
        }
    }

    #[test]
    fn circling_trace_inflates_second_estimate() {
        // One revolution per minute: samples nearly coincide.
        let mut samples = Vec::new();
        for k in 0..6 {
            let t = k as f64 * 60.0;
            samples.push(TraceSample {
                t_s: t,
                x_m: 20_000.0 + 200.0 * (k as f64 * 0.05).cos(),
                y_m: 5_000.0 + 200.0 * (k as f64 * 0.05).sin(),
                z_m: 2_500.0,
                v_s_mps: 110.0,
                chi_rad: 1.0 + 0.05 * k as f64,
            });
        }
        samples[3].x_m = samples[2].x_m;
        samples[3].y_m = samples[2].y_m;
        let trace = FlightTrace {
            id: "stack".into(),
            type_designator: "A320".into(),
            kind: Kind::Arrival,
            samples,
            initial_mass_kg: 62_800.0,
        };
        let p = params();
        let f1 = estimate1(&trace, &p).unwrap();
        let f2 = estimate2(&trace, &p).unwrap();
        assert!(f2.total_kg > 3.0 * f1.total_kg, "{} {}", f2.total_kg, f1.total_kg);
        assert!(f2.flags.contains(&(2, StepFlag::ZeroDistance)));
        assert_eq!(f2.burns_kg[2], 0.0);
    }

    #[test]
    fn two_samples_give_one_interval() {
        let trace = straight(1, 60.0, 0.0);
        let p = params();
        assert_eq!(estimate1(&trace, &p).unwrap().burns_kg.len(), 1);
        assert_eq!(estimate2(&trace, &p).unwrap().burns_kg.len(), 1);
    }

    #[test]
    fn second_estimate_bank_is_pinned() {
        // tan(phi) = dchi * v_hat / (g dt) with dchi = 0.1 rad, v_hat = 100.
        let p = params();
        let trace = FlightTrace {
            id: "bank".into(),
            type_designator: "A320".into(),
            kind: Kind::Arrival,
            samples: vec![
                TraceSample {
                    t_s: 0.0,
                    x_m: 0.0,
                    y_m: 0.0,
                    z_m: 2_000.0,
                    v_s_mps: 100.0,
                    chi_rad: -0.1,
                },
                TraceSample {
                    t_s: 60.0,
                    x_m: 6_000.0,
                    y_m: 0.0,
                    z_m: 2_000.0,
                    v_s_mps: 100.0,
                    chi_rad: 0.0,
                },
            ],
            initial_mass_kg: 65_000.0,
        };
        let est = estimate2(&trace, &p).unwrap();
        let bank = (0.1f64 * 100.0 / (GRAVITY * 60.0)).atan();
        let drag = drag_at(2_000.0, 100.0, 65_000.0, bank, &p).unwrap();
        assert!((est.thrust_n[0] - drag).abs() < 1e-9 * drag);
    }

    #[test]
    fn impossible_climb_is_clamped_and_flagged() {
        let mut trace = straight(2, 60.0, 0.0);
        trace.samples[1].z_m += 20_000.0;
        let est = estimate1(&trace, &params()).unwrap();
        assert!(est.flags.contains(&(0, StepFlag::ClimbClamped)));
        assert!(est.flags.contains(&(1, StepFlag::ClimbClamped)));
    }

    #[test]
    fn published_totals_regress() {
        let cases = [
            (3510.7, 7620.7, 53.93),
            (4582.2, 4787.7, 4.29),
            (14566.0, 23170.0, 37.13),
            (12908.0, 14642.0, 11.84),
        ];
        for (fs, mean, pct) in cases {
            let got = saving_pct(fs, mean).unwrap();
            assert_eq!((got * 100.0).round() / 100.0, pct, "{fs} vs {mean}");
        }
        assert_eq!(saving_pct(10.0, 10.0), Some(0.0));
        assert_eq!(saving_pct(1.0, 0.0), None);
        assert_eq!(co2_kg(1.0), 3.15);
    }

    #[test]
    fn compare_builds_rows_and_totals() {
        let p = params();
        let params_map = HashMap::from([("A320".to_string(), p)]);
        let traces = vec![straight(4, 60.0, 0.0), {
            let mut t = straight(3, 60.0, 0.02);
            t.id = "b".into();
            t
        }];
        let est = estimate_all(&traces, &params_map).unwrap();
        let sim = BTreeMap::from([("straight".to_string(), 100.0)]);
        let rep = compare(&est, &traces, &sim).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows[0].saving_pct.is_some());
        assert!(rep.rows[1].saving_pct.is_none());
        assert!(rep.totals.simulated_kg.is_none());
        let total = rep.rows[0].mean_kg + rep.rows[1].mean_kg;
        assert!((rep.totals.mean_kg - total).abs() < 1e-9);
        assert_eq!(rep.residual_wind.len(), 7);
        let bad = BTreeMap::from([("nope".to_string(), 1.0)]);
        assert!(compare(&est, &traces, &bad).is_err());
    }

    fn csv_text(rows: &[(f64, &str, &str, f64, f64)]) -> String {
        let mut s = TRACE_HEADER.join(",");
        s.push('\n');
        for (t, id, flag, x, z) in rows {
            s.push_str(&format!("{t},{id},A320,{flag},{x},0,{z},120,180\n"));
        }
        s
    }

    fn ingest_str(text: &str) -> Result<Ingested> {
        let params = HashMap::from([("A320".to_string(), params())]);
        ingest_reader(text.as_bytes(), Path::new("mem.csv"), &params, &IngestOptions::default())
    }

    #[test]
    fn ingest_filters_and_classifies() {
        let text = csv_text(&[
            (0.0, "a", "", 30_000.0, 3_000.0),
            (60.0, "a", "", 23_000.0, 2_500.0),
            (120.0, "a", "", 16_000.0, 2_000.0),
            (180.0, "a", "", 9_000.0, 1_000.0),
            (240.0, "a", "", 1_000.0, 0.0),
            (0.0, "b", "", -1_000.0, 0.0),
            (60.0, "b", "", -6_000.0, 800.0),
            (120.0, "b", "", -13_000.0, 1_600.0),
            (180.0, "b", "arrival", -20_000.0, 2_400.0),
            (0.0, "c", "", 9_000.0, 900.0),
            (60.0, "c", "", 2_000.0, 300.0),
            (0.0, "far", "", 70_000.0, 3_000.0),
            (60.0, "far", "", 65_000.0, 3_000.0),
            (120.0, "far", "", 60_000.0, 3_000.0),
        ]);
        let got = ingest_str(&text).unwrap();
        let ids: Vec<&str> = got.traces.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(got.traces[0].kind, Kind::Arrival);
        assert_eq!(got.traces[0].samples.len(), 4);
        // Manual flag overrides the climbing trend.
        assert_eq!(got.traces[1].kind, Kind::Arrival);
        assert_eq!(got.traces[1].samples.len(), 3);
        assert_eq!(got.traces[0].initial_mass_kg, 78_000.0 - 0.8 * 19_000.0);
        assert_eq!(
            got.rejected,
            vec![
                Rejected { id: "c".into(), reason: "too few intervals".into() },
                Rejected { id: "far".into(), reason: "too few intervals".into() },
            ]
        );
        assert!((got.traces[0].samples[0].chi_rad - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn ingest_reports_bad_rows_and_headers() {
        let mut text = csv_text(&[(0.0, "a", "", 1.0, 500.0)]);
        text.push_str("60,a,A320,,oops,0,500,120,180\n");
        match ingest_str(&text) {
            Err(Error::Row { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ingest_str("a,b,c\n1,2,3\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_ingest_roundtrips() {
        let traces = vec![straight(4, 60.0, 0.01)];
        let mut buf = Vec::new();
        write_traces(&mut buf, &traces).unwrap();
        let got = ingest_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(got.traces.len(), 1);
        let (a, b) = (&got.traces[0], &traces[0]);
        assert_eq!(a.kind, Kind::Departure);
        for (s, t) in a.samples.iter().zip(&b.samples) {
            assert!((s.chi_rad - t.chi_rad).abs() < 1e-12 && s.x_m == t.x_m);
        }
    }

    proptest! {
        #[test]
        fn estimators_are_translation_invariant(dx in -1e4..1e4f64, dy in -1e4..1e4f64, seed in 0u64..1000) {
            let mut trace = straight(5, 60.0, 0.01);
            for (k, s) in trace.samples.iter_mut().enumerate() {
                s.x_m += 300.0 * ((seed + k as u64) as f64).sin();
                s.chi_rad += 0.2 * ((seed * 3 + k as u64) as f64).cos();
                s.v_s_mps += 5.0 * ((k as f64) + seed as f64).sin();
            }
            let mut moved = trace.clone();
            for s in &mut moved.samples {
                s.x_m += dx;
                s.y_m += dy;
            }
            let p = params();
            for f in [estimate1, estimate2] {
                let a = f(&trace, &p).unwrap();
                let b = f(&moved, &p).unwrap();
                prop_assert!((a.total_kg - b.total_kg).abs() <= 1e-6 * a.total_kg.max(1.0));
                prop_assert!(a.burns_kg.iter().all(|&x| x >= 0.0));
                prop_assert!(a.masses_kg.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }
}
