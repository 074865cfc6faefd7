use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::controller::{ControllerError, NominalController};
use super::dynamics::{DynamicsConfig, PlantState};
use super::sensor::SensorModel;
use super::world::World;
use crate::cbf::{nu0, nu1, VehicleState};
use crate::log::{LogRow, RunHeader, RunLog, RunSummary};
use crate::params::CbfParams;
use crate::pipeline::{
    chunk, ObstacleBuffer, ObstacleMessage, ObstacleQueue, SafetyFilter, SolveMode, SolverPath,
    Sparsifier,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorldSource {
    Inline(World),
    /// Path relative to the scenario file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub enabled: bool,
    pub fov_enabled: bool,
    pub azimuth_bins: usize,
    pub elevation_bins: usize,
    pub max_points: usize,
    pub queue_capacity: usize,
    pub buffer_capacity: usize,
    /// Control iterations after which a buffered point is ignored.
    pub max_point_age: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            fov_enabled: false,
            azimuth_bins: 32,
            elevation_bins: 12,
            max_points: 100,
            queue_capacity: 16,
            buffer_capacity: 100,
            max_point_age: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: Vector3::new(0.0, 0.0, 1.0),
            velocity: Vector3::zeros(),
            yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub world: WorldSource,
    #[serde(default)]
    pub sensor: SensorModel,
    pub controller: NominalController,
    #[serde(default)]
    pub cbf_params: CbfParams,
    #[serde(default)]
    pub mode: SolveMode,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub initial: InitialState,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock timing of each filter step goes into the log. Off keeps logs reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_dt() -> f64 {
    0.01
}

/// Applies `key=value` overrides to a JSON document. Keys are dotted paths,
/// array elements are addressed by index. Values parse as JSON, falling back
/// to a plain string.
pub fn apply_overrides(
    doc: &mut serde_json::Value,
    overrides: &[String],
) -> Result<(), ConfigError> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(o.clone(), "expected key=value".into()))?;
        let value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            node = match node {
                serde_json::Value::Object(map) => {
                    if last {
                        map.insert(part.to_string(), value.clone());
                        break;
                    }
                    map.entry(part.to_string())
                        .or_insert_with(|| serde_json::json!({}))
                }
                serde_json::Value::Array(items) => {
                    let idx: usize = part.parse().map_err(|_| {
                        ConfigError::Override(o.clone(), format!("`{part}` is not an array index"))
                    })?;
                    let len = items.len();
                    let slot = items.get_mut(idx).ok_or_else(|| {
                        ConfigError::Override(
                            o.clone(),
                            format!("index {idx} out of bounds ({len})"),
                        )
                    })?;
                    if last {
                        *slot = value.clone();
                        break;
                    }
                    slot
                }
                _ => {
                    return Err(ConfigError::Override(
                        o.clone(),
                        format!("`{part}` is not inside an object or array"),
                    ))
                }
            };
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut doc: serde_json::Value = serde_json::from_str(&text)?;
        apply_overrides(&mut doc, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_value(doc, base)
    }

    /// Parses, resolves a file-referenced world against `base` and validates.
    pub fn from_value(doc: serde_json::Value, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_value(doc)?;
        if let WorldSource::File(p) = &cfg.world {
            let path = base.join(p);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            cfg.world = WorldSource::Inline(serde_json::from_str(&text)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn world(&self) -> &World {
        match &self.world {
            WorldSource::Inline(w) => w,
            WorldSource::File(p) => panic!("world {} was never resolved", p.display()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut out: Vec<String> = self
            .cbf_params
            .violations()
            .iter()
            .map(|v| format!("cbf_params.{v}"))
            .collect();
        match &self.world {
            WorldSource::Inline(w) => w.validate(&mut out),
            WorldSource::File(p) => out.push(format!("world file {} is unresolved", p.display())),
        }
        self.sensor.validate(&mut out);
        self.controller.validate(&mut out);
        self.dynamics.validate(&mut out);
        let f = &self.filter;
        if f.azimuth_bins == 0 || f.elevation_bins == 0 || f.max_points == 0 {
            out.push("filter bin counts and max_points must be ≥ 1".into());
        }
        if f.queue_capacity == 0 || f.buffer_capacity == 0 || f.max_point_age == 0 {
            out.push("filter queue_capacity, buffer_capacity and max_point_age must be ≥ 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push("dt must be > 0".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            out.push("duration must be > 0".into());
        }
        let i = &self.initial;
        if !(i
            .position
            .iter()
            .chain(i.velocity.iter())
            .all(|x| x.is_finite())
            && i.yaw.is_finite())
        {
            out.push("initial state must be finite".into());
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(out))
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn sparsifier(&self) -> Sparsifier {
        Sparsifier {
            azimuth_bins: self.filter.azimuth_bins,
            elevation_bins: self.filter.elevation_bins,
            azimuth_half_angle: self.sensor.azimuth_half_angle,
            elevation_half_angle: self.sensor.elevation_half_angle,
            max_points: self.filter.max_points,
            max_range: self.sensor.max_range,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    pub t: f64,
    pub position: Vector3<f64>,
    pub distance: f64,
}

impl std::fmt::Display for Collision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = self.position;
        write!(
            f,
            "collision at t = {:.2} s, position ({:.3}, {:.3}, {:.3}), signed distance {:.4} m",
            self.t, p.x, p.y, p.z, self.distance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("{0}")]
    Collision(Collision),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// What the caller supplies each step beyond the scenario itself.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInput {
    /// Velocity setpoint for externally-driven references (inertial frame).
    pub velocity_setpoint: Option<Vector3<f64>>,
    /// Heading rate for the rate yaw mode.
    pub yaw_rate: f64,
}

/// An obstacle message as it was pushed into the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedMessage {
    pub step: u32,
    pub message: ObstacleMessage,
}

pub fn path_tag(p: &SolverPath) -> &'static str {
    match p {
        SolverPath::Bypass => "bypass",
        SolverPath::PassThrough => "pass",
        SolverPath::Analytic => "analytic",
        SolverPath::Constrained => "qp",
        SolverPath::Fallback(_) => "fallback",
    }
}

/// Closed-loop simulation, advanced one control period at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    plant: PlantState,
    filter: SafetyFilter,
    sparsifier: Sparsifier,
    queue: ObstacleQueue,
    buffer: ObstacleBuffer,
    rng: ChaCha8Rng,
    step: u64,
    scan_period: u64,
    sequence: u32,
    recorded: Vec<RecordedMessage>,
    record_messages: bool,
    last_cloud: Vec<Vector3<f64>>,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let filter = SafetyFilter::new(config.cbf_params, config.mode, config.filter.fov_enabled)
            .with_timing(config.record_timing);
        let mut sim = Self {
            plant: PlantState::default(),
            filter,
            sparsifier: config.sparsifier(),
            queue: ObstacleQueue::new(config.filter.queue_capacity),
            buffer: ObstacleBuffer::new(
                config.filter.buffer_capacity,
                config.sensor.max_range,
                config.filter.max_point_age,
            ),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            step: 0,
            scan_period: config.sensor.scan_period_steps(config.dt),
            sequence: 0,
            recorded: Vec::new(),
            record_messages: false,
            last_cloud: Vec::new(),
            config,
        };
        sim.reset();
        Ok(sim)
    }

    /// Keeps every queued obstacle message for later replay.
    pub fn record_messages(mut self, on: bool) -> Self {
        self.record_messages = on;
        self
    }

    pub fn reset(&mut self) {
        let i = self.config.initial;
        self.plant = PlantState {
            vehicle: VehicleState::new(i.position, i.velocity, i.yaw),
            a_actual: Vector3::zeros(),
        };
        self.filter.reset();
        self.filter.set_enabled(self.config.filter.enabled);
        self.queue.clear();
        self.buffer.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.step = 0;
        self.sequence = 0;
        self.recorded.clear();
        self.last_cloud.clear();
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        self.config.world()
    }

    pub fn state(&self) -> &VehicleState {
        &self.plant.vehicle
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.steps()
    }

    pub fn buffer(&self) -> &ObstacleBuffer {
        &self.buffer
    }

    pub fn queue(&self) -> &ObstacleQueue {
        &self.queue
    }

    pub fn filter(&self) -> &SafetyFilter {
        &self.filter
    }

    pub fn set_filter_enabled(&mut self, on: bool) {
        self.filter.set_enabled(on);
    }

    pub fn set_params(&mut self, params: CbfParams) -> Result<(), ConfigError> {
        let v = params.violations();
        if !v.is_empty() {
            return Err(ConfigError::Invalid(
                v.iter().map(ToString::to_string).collect(),
            ));
        }
        self.config.cbf_params = params;
        self.filter.set_params(params);
        Ok(())
    }

    pub fn take_recorded(&mut self) -> Vec<RecordedMessage> {
        std::mem::take(&mut self.recorded)
    }

    /// Most recent raw sensor returns (vehicle frame).
    pub fn last_cloud(&self) -> &[Vector3<f64>] {
        &self.last_cloud
    }

    fn scan(&mut self, t: f64) {
        let cloud =
            self.config
                .sensor
                .scan(self.config.world(), &self.plant.vehicle, t, &mut self.rng);
        let set = self.sparsifier.sparsify(&cloud);
        self.last_cloud = cloud;
        if set.is_empty() {
            return;
        }
        if self.step == 0 {
            let v = self.plant.vehicle.body_velocity();
            let p = &self.config.cbf_params;
            if set
                .points()
                .iter()
                .any(|r| nu0(r, p) < 0.0 || nu1(r, &v, p) < 0.0)
            {
                log::warn!("initial state violates the obstacle constraint (ν₀ or ν₁ < 0)");
            }
        }
        let msgs = chunk(&set, self.sequence);
        self.sequence = self.sequence.wrapping_add(1);
        if self.record_messages {
            self.recorded.extend(msgs.iter().map(|m| RecordedMessage {
                step: self.step as u32,
                message: m.clone(),
            }));
        }
        self.queue.extend(msgs);
    }

    /// Advances one control period and returns the log row for it.
    pub fn step(&mut self, input: &StepInput) -> Result<LogRow, StepError> {
        let t = self.time();
        let dt = self.config.dt;
        let vehicle = self.plant.vehicle;
        let distance = self.config.world().signed_distance(&vehicle.position, t);
        if distance <= 0.0 {
            return Err(StepError::Collision(Collision {
                t,
                position: vehicle.position,
                distance,
            }));
        }
        if self.step % self.scan_period == 0 {
            self.scan(t);
        }
        self.buffer.ingest(&mut self.queue);

        let controller = &self.config.controller;
        let a_sp = controller.acceleration(&vehicle, t, input.velocity_setpoint)?;
        let tracking_error = controller.tracking_error(&vehicle, t, input.velocity_setpoint);
        let v_ref = controller
            .velocity_setpoint(t, input.velocity_setpoint)
            .ok();
        let out = self.filter.step(&vehicle, &self.buffer, &a_sp, dt);
        let tel = out.telemetry;
        let row = LogRow {
            t,
            position: vehicle.position,
            velocity: vehicle.velocity,
            yaw: vehicle.yaw,
            a_sp,
            a_star: out.a_star,
            a_actual: self.plant.a_actual,
            h: tel.h,
            h_f: tel.h_f,
            eta: tel.eta,
            active_set: tel.active_set,
            slacks: tel.slacks,
            n_obstacles: tel.n_obstacles,
            distance,
            tracking_error,
            filter_enabled: self.filter.enabled(),
            compute_ns: tel.compute_ns,
            lf_h: tel.lf_h,
            lg_h: tel.lg_h.map(|g| g.transpose()),
            path: path_tag(&tel.path).to_string(),
        };

        self.plant.step(
            &self.config.dynamics,
            &out.a_star,
            input.yaw_rate,
            v_ref,
            dt,
        );
        self.step += 1;

        // Catch crossings of thin geometry inside a single step.
        let moved = self.plant.vehicle.position - vehicle.position;
        let len = moved.norm();
        if len > 0.0 {
            if let Some(r) =
                self.config
                    .world()
                    .ray_cast(&vehicle.position, &(moved / len), len, self.time())
            {
                return Err(StepError::Collision(Collision {
                    t: self.time(),
                    position: vehicle.position + moved * (r / len),
                    distance: 0.0,
                }));
            }
        }
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ScenarioConfig,
    pub log: RunLog,
    pub messages: Vec<RecordedMessage>,
    pub summary: RunSummary,
    pub collision: Option<Collision>,
}

/// Runs a scenario to completion or to the first collision.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome, RunError> {
    let mut sim = Simulation::new(config.clone())?.record_messages(true);
    let mut rows = Vec::with_capacity(config.steps() as usize);
    let mut collision = None;
    while !sim.is_finished() {
        match sim.step(&StepInput::default()) {
            Ok(row) => rows.push(row),
            Err(StepError::Collision(c)) => {
                collision = Some(c);
                break;
            }
            Err(StepError::Controller(e)) => return Err(RunError::Controller(e)),
        }
    }
    let log = RunLog {
        header: RunHeader {
            config_hash: config.hash(),
            code_version: CODE_VERSION.into(),
            seed: config.seed,
        },
        rows,
    };
    let mut summary = log.summary(config.dt);
    summary.collision_time = collision.map(|c| c.t);
    Ok(RunOutcome {
        config: config.clone(),
        log,
        messages: sim.take_recorded(),
        summary,
        collision,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Controller(ControllerError),
}
