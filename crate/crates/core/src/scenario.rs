//! Scenario files: TMA geometry, envelopes, wind, optimiser settings and the
//! aircraft list.
//!
//! A scenario is a TOML document. A top-level `base = "other.toml"` key is
//! resolved relative to the file and deep-merged underneath it (tables merge
//! key by key, everything else is replaced). Angles are degrees measured
//! counter-clockwise from east (+x), the same convention as aircraft heading.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aircraft::{AircraftParams, AircraftState};
use crate::constraints::{LandingEnvelope, SeparationZone};
use crate::error::{Error, Result};
use crate::objectives::{flow_course, ArrivalGoal, DepartureGoal, Goal, PopulationMap};
use crate::smc::SmcConfig;
use crate::wind::WindConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmaConfig {
    pub radius_m: f64,
    pub dt_s: f64,
    pub horizon: usize,
    /// Departures count as finished beyond this range. Defaults to the radius.
    pub exit_distance_m: Option<f64>,
    /// Defaults to `3 * (latest entry + 100)`.
    pub step_limit: Option<usize>,
}

impl Default for TmaConfig {
    fn default() -> Self {
        TmaConfig {
            radius_m: 30_000.0,
            dt_s: 10.0,
            horizon: 6,
            exit_distance_m: None,
            step_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EnvelopeFile {
    p_runway_m: f64,
    p_beta_deg: f64,
    p_chi_deg: f64,
    p_vs_mps: f64,
}

impl Default for EnvelopeFile {
    fn default() -> Self {
        let e = LandingEnvelope::default();
        EnvelopeFile {
            p_runway_m: e.p_runway_m,
            p_beta_deg: e.p_beta_rad.to_degrees(),
            p_chi_deg: e.p_chi_rad.to_degrees(),
            p_vs_mps: e.p_vs_mps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// `name,x_km,y_km,radius_km` file, relative to the scenario file.
    pub centres_file: Option<PathBuf>,
    /// Fraction of the total cost, in [0, 1).
    pub weight: f64,
    pub altitude_cutoff_m: f64,
    pub grid_spacing_m: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            centres_file: None,
            weight: 0.0,
            altitude_cutoff_m: 4000.0,
            grid_spacing_m: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ArrivalDefaults {
    altitude_m: f64,
    speed_mps: f64,
    descent_angle_deg: f64,
    weights: [f64; 3],
    /// Fraction of the fuel capacity on board at entry.
    reserve_fraction: f64,
}

impl Default for ArrivalDefaults {
    fn default() -> Self {
        ArrivalDefaults {
            // On the nominal glide for a straight-in entry at the boundary.
            altitude_m: 1500.0,
            speed_mps: 85.0,
            // beta is measured against twice the remaining arc, so 1.5 degrees
            // is a 3 degree glide along the arc itself.
            descent_angle_deg: 1.5,
            weights: ArrivalGoal::DEFAULT_WEIGHTS,
            reserve_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DepartureDefaults {
    x_m: f64,
    y_m: f64,
    altitude_m: f64,
    speed_mps: f64,
    heading_deg: f64,
    target_altitude_m: f64,
    target_airspeed_mps: f64,
    weights: [f64; 4],
}

impl Default for DepartureDefaults {
    fn default() -> Self {
        DepartureDefaults {
            x_m: -3000.0,
            y_m: 0.0,
            altitude_m: 400.0,
            speed_mps: 85.0,
            heading_deg: 180.0,
            target_altitude_m: 6000.0,
            target_airspeed_mps: 140.0,
            weights: DepartureGoal::DEFAULT_WEIGHTS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Defaults {
    arrival: ArrivalDefaults,
    departure: DepartureDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AircraftEntry {
    id: String,
    #[serde(rename = "type", default = "default_type")]
    type_designator: String,
    kind: Kind,
    #[serde(default)]
    entry_step: usize,
    /// Arrivals: where on the TMA boundary the aircraft appears.
    entry_bearing_deg: Option<f64>,
    x_m: Option<f64>,
    y_m: Option<f64>,
    altitude_m: Option<f64>,
    speed_mps: Option<f64>,
    heading_deg: Option<f64>,
    mass_kg: Option<f64>,
    /// Fuel on board; an alternative to `mass_kg`.
    fuel_kg: Option<f64>,
    target_bearing_deg: Option<f64>,
    target_altitude_m: Option<f64>,
    target_airspeed_mps: Option<f64>,
    descent_angle_deg: Option<f64>,
    weights: Option<Vec<f64>>,
}

fn default_type() -> String {
    "A320".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScenarioFile {
    base: Option<String>,
    name: Option<String>,
    aircraft_dir: Option<PathBuf>,
    tma: TmaConfig,
    envelope: EnvelopeFile,
    separation: SeparationZone,
    wind: WindConfig,
    smc: SmcConfig,
    noise: NoiseConfig,
    defaults: Defaults,
    aircraft: Vec<AircraftEntry>,
}

/// A fully resolved aircraft: initial state at its entry step and its goal.
#[derive(Debug, Clone, PartialEq)]
pub struct AircraftSpec {
    pub id: String,
    pub type_designator: String,
    pub kind: Kind,
    pub entry_step: usize,
    pub initial: AircraftState,
    pub goal: Goal,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub tma: TmaConfig,
    pub landing: LandingEnvelope,
    pub separation: SeparationZone,
    pub wind: WindConfig,
    pub smc: SmcConfig,
    pub noise: NoiseConfig,
    /// Resolved population map when a centres file is configured.
    pub population: Option<PopulationMap>,
    pub aircraft: Vec<AircraftSpec>,
    pub types: HashMap<String, AircraftParams>,
}

impl Scenario {
    pub fn exit_distance_m(&self) -> f64 {
        self.tma.exit_distance_m.unwrap_or(self.tma.radius_m)
    }

    pub fn step_limit(&self) -> usize {
        self.tma.step_limit.unwrap_or_else(|| {
            let latest = self.aircraft.iter().map(|a| a.entry_step).max().unwrap_or(0);
            3 * (latest + 100)
        })
    }

    pub fn params_for(&self, spec: &AircraftSpec) -> &AircraftParams {
        &self.types[&spec.type_designator]
    }

    /// Loads a scenario file, resolving `base` chains and relative paths.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let value = load_merged(path, 0)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_value(value, &dir).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Parses a document without a `base` key; relative paths resolve against `dir`.
    pub fn from_toml_str(text: &str, dir: &Path) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if value.contains_key("base") {
            return Err(Error::config("`base` is only supported when loading from a file"));
        }
        Self::from_value(value, dir)
    }

    fn from_value(value: toml::Table, dir: &Path) -> Result<Self> {
        let file: ScenarioFile = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        build(file, dir)
    }

    /// A copy holding only aircraft `index`, entering at step 0.
    pub fn solo(&self, index: usize) -> Option<Scenario> {
        let mut spec = self.aircraft.get(index)?.clone();
        spec.entry_step = 0;
        let mut out = self.clone();
        out.name = format!("{}/{}", self.name, spec.id);
        out.aircraft = vec![spec];
        Some(out)
    }

    /// Applies a noise weight given as a percentage, rebuilding the map.
    pub fn set_noise_weight_pct(&mut self, pct: f64) -> Result<()> {
        let w = pct / 100.0;
        if !(0.0..1.0).contains(&w) {
            return Err(Error::config("noise weight must lie in [0, 100) percent"));
        }
        self.noise.weight = w;
        if let Some(map) = &mut self.population {
            map.noise_weight = w;
        } else if w > 0.0 {
            return Err(Error::config("a noise weight needs [noise] centres_file"));
        }
        Ok(())
    }
}

const MAX_BASE_DEPTH: usize = 8;

fn load_merged(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > MAX_BASE_DEPTH {
        return Err(Error::config(format!("{}: base chain too deep", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    // Paths are made absolute per file so that a base's relative paths stay its own.
    for key in ["aircraft_dir"] {
        absolutise(&mut table, &[key], &dir);
    }
    absolutise(&mut table, &["noise", "centres_file"], &dir);
    match table.remove("base") {
        Some(toml::Value::String(base)) => {
            let mut merged = load_merged(&dir.join(base), depth + 1)?;
            merge(&mut merged, table);
            Ok(merged)
        }
        Some(_) => Err(Error::config(format!("{}: `base` must be a string", path.display()))),
        None => Ok(table),
    }
}

fn absolutise(table: &mut toml::Table, key: &[&str], dir: &Path) {
    let mut t = table;
    for k in &key[..key.len() - 1] {
        match t.get_mut(*k) {
            Some(toml::Value::Table(inner)) => t = inner,
            _ => return,
        }
    }
    if let Some(toml::Value::String(s)) = t.get_mut(key[key.len() - 1]) {
        if Path::new(s.as_str()).is_relative() {
            *s = dir.join(&*s).to_string_lossy().into_owned();
        }
    }
}

/// Deep merge of `over` into `base`.
pub fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        dir.join(p)
    } else {
        p.to_path_buf()
    }
}

fn load_types(file: &ScenarioFile, dir: &Path) -> Result<HashMap<String, AircraftParams>> {
    let mut types = HashMap::new();
    for a in &file.aircraft {
        if types.contains_key(&a.type_designator) {
            continue;
        }
        let from_dir = file
            .aircraft_dir
            .as_ref()
            .map(|d| resolve(dir, d).join(format!("{}.toml", a.type_designator)))
            .filter(|p| p.exists());
        let params = match from_dir {
            Some(p) => AircraftParams::load(p)?,
            None if a.type_designator == "A320" => AircraftParams::a320(),
            None => {
                return Err(Error::config(format!(
                    "no parameter file for aircraft type {}",
                    a.type_designator
                )))
            }
        };
        types.insert(a.type_designator.clone(), params);
    }
    Ok(types)
}

fn build(file: ScenarioFile, dir: &Path) -> Result<Scenario> {
    let tma = file.tma.clone();
    if !(tma.radius_m > 0.0) || !(tma.dt_s > 0.0) || tma.horizon == 0 {
        return Err(Error::config("tma radius, dt and horizon must be positive"));
    }
    let e = &file.envelope;
    let landing = LandingEnvelope {
        p_runway_m: e.p_runway_m,
        p_beta_rad: e.p_beta_deg.to_radians(),
        p_chi_rad: e.p_chi_deg.to_radians(),
        p_vs_mps: e.p_vs_mps,
    };
    if [landing.p_runway_m, landing.p_beta_rad, landing.p_chi_rad, landing.p_vs_mps]
        .iter()
        .any(|v| !(*v > 0.0))
    {
        return Err(Error::config("landing envelope parameters must be positive"));
    }
    if !(file.separation.p_r_m > 0.0 && file.separation.p_h_m > 0.0) {
        return Err(Error::config("separation zone parameters must be positive"));
    }
    file.smc.validate()?;
    let types = load_types(&file, dir)?;

    let population = match &file.noise.centres_file {
        Some(p) => {
            let centres = PopulationMap::load_centres(resolve(dir, p))?;
            Some(PopulationMap::new(
                centres,
                file.noise.grid_spacing_m,
                file.noise.altitude_cutoff_m,
                file.noise.weight,
                PopulationMap::DEFAULT_HALF_EXTENT_M,
            )?)
        }
        None if file.noise.weight > 0.0 => {
            return Err(Error::config("a noise weight needs [noise] centres_file"))
        }
        None => None,
    };

    let mut seen = std::collections::HashSet::new();
    let mut aircraft = Vec::with_capacity(file.aircraft.len());
    for entry in &file.aircraft {
        if !seen.insert(entry.id.clone()) {
            return Err(Error::config(format!("duplicate aircraft id {}", entry.id)));
        }
        let params = &types[&entry.type_designator];
        aircraft.push(resolve_aircraft(entry, params, &file.defaults, &tma)?);
    }

    Ok(Scenario {
        name: file.name.unwrap_or_else(|| "scenario".into()),
        tma,
        landing,
        separation: file.separation,
        wind: file.wind,
        smc: file.smc,
        noise: file.noise,
        population,
        aircraft,
        types,
    })
}

fn resolve_aircraft(
    a: &AircraftEntry,
    params: &AircraftParams,
    defaults: &Defaults,
    tma: &TmaConfig,
) -> Result<AircraftSpec> {
    let bad = |msg: &str| Error::config(format!("aircraft {}: {msg}", a.id));
    let fuel_mass = |fuel: f64| params.empty_mass_kg + fuel;
    let (initial, goal) = match a.kind {
        Kind::Arrival => {
            let d = &defaults.arrival;
            let (x, y) = match (a.x_m, a.y_m, a.entry_bearing_deg) {
                (Some(x), Some(y), _) => (x, y),
                (None, None, Some(b)) => {
                    let b = b.to_radians();
                    (tma.radius_m * b.cos(), tma.radius_m * b.sin())
                }
                _ => return Err(bad("arrivals need entry_bearing_deg or both x_m and y_m")),
            };
            let heading = match a.heading_deg {
                Some(h) => h.to_radians(),
                None => flow_course(x, y).map_err(|_| bad("entry point is the runway"))?,
            };
            let mass = match (a.mass_kg, a.fuel_kg) {
                (Some(m), _) => m,
                (None, Some(f)) => fuel_mass(f),
                (None, None) => fuel_mass(d.reserve_fraction * params.fuel_capacity_kg),
            };
            let weights = match &a.weights {
                Some(w) if w.len() == 3 => [w[0], w[1], w[2]],
                Some(_) => return Err(bad("arrival weights need three entries")),
                None => d.weights,
            };
            let goal = ArrivalGoal {
                nominal_descent_angle_rad: a.descent_angle_deg.unwrap_or(d.descent_angle_deg).to_radians(),
                weights,
            };
            (
                AircraftState {
                    x_m: x,
                    y_m: y,
                    z_m: a.altitude_m.unwrap_or(d.altitude_m),
                    v_s_mps: a.speed_mps.unwrap_or(d.speed_mps),
                    chi_rad: heading,
                    mass_kg: mass,
                },
                Goal::Arrival(goal),
            )
        }
        Kind::Departure => {
            let d = &defaults.departure;
            let mass = match (a.mass_kg, a.fuel_kg) {
                (Some(m), _) => m,
                (None, Some(f)) => fuel_mass(f),
                (None, None) => params.max_takeoff_mass_kg,
            };
            let weights = match &a.weights {
                Some(w) if w.len() == 4 => [w[0], w[1], w[2], w[3]],
                Some(_) => return Err(bad("departure weights need four entries")),
                None => d.weights,
            };
            let target = a
                .target_bearing_deg
                .ok_or_else(|| bad("departures need target_bearing_deg"))?;
            let goal = DepartureGoal {
                target_altitude_m: a.target_altitude_m.unwrap_or(d.target_altitude_m),
                target_bearing_rad: target.to_radians(),
                target_airspeed_mps: a.target_airspeed_mps.unwrap_or(d.target_airspeed_mps),
                weights,
            };
            (
                AircraftState {
                    x_m: a.x_m.unwrap_or(d.x_m),
                    y_m: a.y_m.unwrap_or(d.y_m),
                    z_m: a.altitude_m.unwrap_or(d.altitude_m),
                    v_s_mps: a.speed_mps.unwrap_or(d.speed_mps),
                    chi_rad: a.heading_deg.unwrap_or(d.heading_deg).to_radians(),
                    mass_kg: mass,
                },
                Goal::Departure(goal),
            )
        }
    };
    goal.validate().map_err(|e| bad(&e.to_string()))?;
    if initial.mass_kg > params.max_takeoff_mass_kg || initial.mass_kg < params.empty_mass_kg {
        return Err(bad("initial mass outside [empty, max take-off]"));
    }
    if !(initial.v_s_mps > 0.0) {
        return Err(bad("initial airspeed must be positive"));
    }
    Ok(AircraftSpec {
        id: a.id.clone(),
        type_designator: a.type_designator.clone(),
        kind: a.kind,
        entry_step: a.entry_step,
        initial,
        goal,
    })
}

/// Documentation of every scenario key, used by the CLI help.
pub const SCENARIO_KEYS: &str = "\
Scenario file keys (TOML; angles in degrees counter-clockwise from east):
  base = \"FILE\"            deep-merge this file over FILE
  name, aircraft_dir       label; directory holding <TYPE>.toml parameter files
  [tma]        radius_m dt_s horizon exit_distance_m step_limit
  [envelope]   p_runway_m p_beta_deg p_chi_deg p_vs_mps
  [separation] p_r_m p_h_m
  [wind]       nx ny nz extent_min_m extent_max_m sigma_profile=[[z,sigma],..]
               lambda_per_s beta_per_m gamma_per_m g_t_s
               nominal=[{t_s, speed_mps, from_deg (compass)}]
  [smc]        particles iterations chunk_size workers elitism max_draws
               schedule={base,scale,rate} sigma={thrust_frac,bank_deg,climb_deg,anneal}
  [noise]      centres_file weight altitude_cutoff_m grid_spacing_m
  [defaults.arrival]   altitude_m speed_mps descent_angle_deg weights reserve_fraction
  [defaults.departure] x_m y_m altitude_m speed_mps heading_deg target_altitude_m
                       target_airspeed_mps weights
  [[aircraft]] id type kind=arrival|departure entry_step entry_bearing_deg x_m y_m
               altitude_m speed_mps heading_deg mass_kg fuel_kg target_bearing_deg
               target_altitude_m target_airspeed_mps descent_angle_deg weights";
