//! The simulation side of the service: owns the [`Simulation`], applies
//! operator commands with the failsafe, and records the run for replay.

use nalgebra::Vector3;

use cbf_shield::cbf::rotation_vi;
use cbf_shield::log::{LogRow, RunHeader, RunLog};
use cbf_shield::sim::{
    Collision, ConfigError, RecordedMessage, Reference, RunOutcome, ScenarioConfig, Simulation,
    StepError, StepInput, CODE_VERSION,
};
use cbf_shield::CbfParams;

use crate::protocol::{ControlAction, Hello, ServerMessage, StateSnapshot, VelocityCommand};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeleopOptions {
    /// Commands above this speed are scaled down (m/s).
    pub max_speed: f64,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Snapshot frames per wall-clock second and client.
    pub snapshot_hz: f64,
    /// A command is held for this long after it was received (s, simulated).
    pub hold: f64,
    /// Then it decays linearly to zero over this long (s, simulated).
    pub decay: f64,
    pub max_snapshot_points: usize,
    /// The simulation waits for a `start` action.
    pub start_paused: bool,
}

impl Default for TeleopOptions {
    fn default() -> Self {
        Self {
            max_speed: 3.0,
            time_scale: 1.0,
            snapshot_hz: 30.0,
            hold: 0.5,
            decay: 1.0,
            max_snapshot_points: 64,
            start_paused: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("teleoperation needs an external velocity reference (controller.reference.type = \"external\")")]
    NotExternal,
}

#[derive(Debug, Clone, Copy)]
struct HeldCommand {
    cmd: VelocityCommand,
    received_step: u64,
}

/// Clamp to `max` (m/s), keeping the direction.
pub fn clamp_speed(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Scale applied to a command `age` seconds after it arrived.
pub fn failsafe_gain(age: f64, hold: f64, decay: f64) -> f64 {
    if age < hold {
        1.0
    } else if decay > 0.0 {
        (1.0 - (age - hold) / decay).max(0.0)
    } else {
        0.0
    }
}

pub struct Session {
    sim: Simulation,
    opts: TeleopOptions,
    running: bool,
    collision: Option<Collision>,
    held: Option<HeldCommand>,
    latency_pending: Option<(u64, u64)>,
    cmd_seq: Option<u64>,
    cmd_latency_steps: Option<u64>,
    v_sp: Vector3<f64>,
    rows: Vec<LogRow>,
    messages: Vec<RecordedMessage>,
}

impl Session {
    pub fn new(config: ScenarioConfig, opts: TeleopOptions) -> Result<Self, SessionError> {
        if config.controller.reference != Reference::External {
            return Err(SessionError::NotExternal);
        }
        Ok(Self {
            sim: Simulation::new(config)?.record_messages(true),
            running: !opts.start_paused,
            opts,
            collision: None,
            held: None,
            latency_pending: None,
            cmd_seq: None,
            cmd_latency_steps: None,
            v_sp: Vector3::zeros(),
            rows: Vec::new(),
            messages: Vec::new(),
        })
    }

    pub fn options(&self) -> &TeleopOptions {
        &self.opts
    }

    pub fn config(&self) -> &ScenarioConfig {
        self.sim.config()
    }

    pub fn params(&self) -> CbfParams {
        self.sim.config().cbf_params
    }

    /// Completed control steps since the last reset.
    pub fn step_index(&self) -> u64 {
        self.sim.step_index()
    }

    pub fn hello(&self, controller: bool) -> Hello {
        Hello {
            config_hash: self.sim.config().hash(),
            params: self.params(),
            max_speed: self.opts.max_speed,
            dt: self.sim.config().dt,
            controller,
        }
    }

    /// Stores a velocity command that arrived after `received_step` steps.
    pub fn command(&mut self, cmd: VelocityCommand, received_step: u64) {
        if let Some(seq) = cmd.seq {
            self.latency_pending = Some((seq, received_step));
        }
        self.held = Some(HeldCommand { cmd, received_step });
    }

    /// Applies a control action. Returns a reply frame for actions that have one.
    pub fn control(&mut self, action: ControlAction) -> Result<Option<ServerMessage>, String> {
        match action {
            ControlAction::Start => self.running = self.collision.is_none(),
            ControlAction::Pause => self.running = false,
            ControlAction::Reset => self.reset(),
            ControlAction::ToggleFilter { value } => {
                let on = value.unwrap_or(!self.sim.filter().enabled());
                self.sim.set_filter_enabled(on);
            }
            ControlAction::SetParam { key, value } => {
                let mut doc = serde_json::to_value(self.params()).expect("params serialize");
                match doc.get_mut(&key) {
                    Some(slot) => *slot = value,
                    None => return Err(format!("unknown parameter `{key}`")),
                }
                let params: CbfParams =
                    serde_json::from_value(doc).map_err(|e| format!("parameter `{key}`: {e}"))?;
                self.sim.set_params(params).map_err(|e| e.to_string())?;
            }
            ControlAction::Log => {
                return Ok(Some(ServerMessage::Log {
                    csv: self.log().to_csv_string(),
                }))
            }
        }
        Ok(None)
    }

    fn reset(&mut self) {
        self.sim.reset();
        self.collision = None;
        self.held = None;
        self.latency_pending = None;
        self.v_sp = Vector3::zeros();
        self.rows.clear();
        self.messages.clear();
    }

    /// Velocity setpoint for the next step (inertial frame) and the yaw rate.
    fn setpoint(&self) -> (Vector3<f64>, f64) {
        let Some(h) = self.held else {
            return (Vector3::zeros(), 0.0);
        };
        let dt = self.sim.config().dt;
        let age = self.sim.step_index().saturating_sub(h.received_step) as f64 * dt;
        let gain = failsafe_gain(age, self.opts.hold, self.opts.decay);
        if gain == 0.0 {
            return (Vector3::zeros(), 0.0);
        }
        let body = clamp_speed(
            Vector3::new(h.cmd.vx, h.cmd.vy, h.cmd.vz),
            self.opts.max_speed,
        );
        let r_iv = rotation_vi(self.sim.state().yaw).transpose();
        let v = r_iv * body;
        if gain == 1.0 {
            (v, h.cmd.yaw_rate)
        } else {
            (v * gain, h.cmd.yaw_rate * gain)
        }
    }

    /// Advances one control period unless paused or collided.
    pub fn tick(&mut self) {
        if !self.running || self.collision.is_some() || self.sim.is_finished() {
            return;
        }
        let (v_sp, yaw_rate) = self.setpoint();
        self.v_sp = v_sp;
        let step = self.sim.step_index();
        match self.sim.step(&StepInput {
            velocity_setpoint: Some(v_sp),
            yaw_rate,
        }) {
            Ok(row) => self.rows.push(row),
            Err(StepError::Collision(c)) => {
                log::warn!("{c}");
                self.collision = Some(c);
                self.running = false;
            }
            Err(StepError::Controller(e)) => {
                log::error!("{e}");
                self.running = false;
            }
        }
        self.messages.extend(self.sim.take_recorded());
        if let Some((seq, received)) = self.latency_pending.take() {
            self.cmd_seq = Some(seq);
            self.cmd_latency_steps = Some(step.saturating_sub(received));
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let state = self.sim.state();
        let r_iv = rotation_vi(state.yaw).transpose();
        let live: Vec<Vector3<f64>> = self.sim.buffer().live_points().collect();
        let stride = live
            .len()
            .div_ceil(self.opts.max_snapshot_points.max(1))
            .max(1);
        let points = live
            .iter()
            .step_by(stride)
            .map(|r| (state.position + r_iv * r).into())
            .collect();
        let last = self.rows.last();
        let t = self.sim.time();
        StateSnapshot {
            step: self.sim.step_index(),
            t,
            p: state.position.into(),
            v: state.velocity.into(),
            yaw: state.yaw,
            v_sp: self.v_sp.into(),
            a_sp: last.map_or([0.0; 3], |r| r.a_sp.into()),
            a_star: last.map_or([0.0; 3], |r| r.a_star.into()),
            h: last.and_then(|r| r.h),
            h_f1: last.map_or(0.0, |r| r.h_f[0]),
            h_f2: last.map_or(0.0, |r| r.h_f[1]),
            eta: last.and_then(|r| r.eta),
            n_obstacles: last.map_or(0, |r| r.n_obstacles),
            points,
            distance: self.sim.world().signed_distance(&state.position, t),
            filter_enabled: self.sim.filter().enabled(),
            running: self.running,
            collided: self.collision.is_some(),
            cmd_seq: self.cmd_seq,
            cmd_latency_steps: self.cmd_latency_steps,
        }
    }

    pub fn log(&self) -> RunLog {
        let cfg = self.sim.config();
        RunLog {
            header: RunHeader {
                config_hash: cfg.hash(),
                code_version: CODE_VERSION.into(),
                seed: cfg.seed,
            },
            rows: self.rows.clone(),
        }
    }

    /// Everything needed to write a run directory and replay it.
    pub fn recording(&self) -> RunOutcome {
        let log = self.log();
        let mut summary = log.summary(self.sim.config().dt);
        summary.collision_time = self.collision.map(|c| c.t);
        RunOutcome {
            config: self.sim.config().clone(),
            log,
            messages: self.messages.clone(),
            summary,
            collision: self.collision,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cbf_shield::sim::Reference;

    fn free_space() -> ScenarioConfig {
        let doc = serde_json::json!({
            "name": "free",
            "world": {"obstacles": [], "bounds": {"min": [-10, -10, 0], "max": [10, 10, 5]}},
            "controller": {"reference": {"type": "external"}},
            "dynamics": {"yaw": {"mode": "rate"}},
            "duration": 100.0
        });
        ScenarioConfig::from_value(doc, std::path::Path::new(".")).unwrap()
    }

    #[test]
    fn gain_schedule() {
        assert_eq!(failsafe_gain(0.0, 0.5, 1.0), 1.0);
        assert_eq!(failsafe_gain(0.49, 0.5, 1.0), 1.0);
        assert!((failsafe_gain(1.0, 0.5, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(failsafe_gain(1.5, 0.5, 1.0), 0.0);
        assert_eq!(failsafe_gain(9.0, 0.5, 1.0), 0.0);
    }

    #[test]
    fn clamps_to_max_speed() {
        let v = clamp_speed(Vector3::new(3.0, 4.0, 0.0), 3.0);
        assert!((v.norm() - 3.0).abs() < 1e-12);
        assert!((v.x / v.y - 0.75).abs() < 1e-12);
        let small = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(clamp_speed(small, 3.0), small);
    }

    #[test]
    fn rejects_scheduled_references() {
        let mut cfg = free_space();
        cfg.controller.reference = Reference::VelocitySchedule { waypoints: vec![] };
        assert!(matches!(
            Session::new(cfg, TeleopOptions::default()),
            Err(SessionError::NotExternal)
        ));
    }

    #[test]
    fn command_is_held_then_decays() {
        let mut s = Session::new(free_space(), TeleopOptions::default()).unwrap();
        s.command(
            VelocityCommand {
                vx: 1.0,
                ..Default::default()
            },
            0,
        );
        s.tick();
        assert_eq!(s.snapshot().v_sp, [1.0, 0.0, 0.0]);
        for _ in 0..99 {
            s.tick();
        }
        // 100 steps after arrival: one second, halfway through the decay.
        s.tick();
        assert!((s.snapshot().v_sp[0] - 0.5).abs() < 1e-9);
        for _ in 0..60 {
            s.tick();
        }
        assert_eq!(s.snapshot().v_sp, [0.0; 3]);
    }

    #[test]
    fn vehicle_frame_commands_follow_yaw() {
        let mut cfg = free_space();
        cfg.initial.yaw = std::f64::consts::FRAC_PI_2;
        let mut s = Session::new(cfg, TeleopOptions::default()).unwrap();
        s.command(
            VelocityCommand {
                vx: 2.0,
                ..Default::default()
            },
            0,
        );
        s.tick();
        let v = s.snapshot().v_sp;
        assert!(v[0].abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn reset_and_params() {
        let mut s = Session::new(free_space(), TeleopOptions::default()).unwrap();
        for _ in 0..10 {
            s.tick();
        }
        assert_eq!(s.snapshot().step, 10);
        s.control(ControlAction::Reset).unwrap();
        assert_eq!(s.snapshot().t, 0.0);
        assert!(s.log().rows.is_empty());
        s.control(ControlAction::SetParam {
            key: "kappa".into(),
            value: 35.into(),
        })
        .unwrap();
        assert_eq!(s.params().kappa, 35.0);
        let err = s
            .control(ControlAction::SetParam {
                key: "epsilon".into(),
                value: (-1).into(),
            })
            .unwrap_err();
        assert!(err.contains("epsilon"), "{err}");
        assert!(s
            .control(ControlAction::SetParam {
                key: "nope".into(),
                value: 1.into()
            })
            .is_err());
    }
}
