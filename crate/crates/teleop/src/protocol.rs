//! JSON text frames exchanged over the WebSocket.
//!
//! Client to server:
//!
//! ```json
//! {"type":"cmd","vx":1.0,"vy":0.0,"vz":0.0,"yaw_rate":0.0}
//! {"type":"control","action":"toggle_filter","value":false}
//! {"type":"control","action":"set_param","key":"kappa","value":35}
//! ```
//!
//! Server to client: one `hello` on connect, `state` snapshots at a fixed
//! wall-clock rate, `error` for rejected messages and `log` on request.

use cbf_shield::CbfParams;
use serde::{Deserialize, Serialize};

/// Velocity command in the yaw-aligned vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub vz: f64,
    #[serde(default)]
    pub yaw_rate: f64,
    /// Client timestamp (ms), echoed for diagnostics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    /// Client sequence number, echoed in snapshots once the command takes effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Pause,
    Reset,
    /// Sets the filter state, or flips it when `value` is absent.
    ToggleFilter {
        #[serde(default)]
        value: Option<bool>,
    },
    SetParam {
        key: String,
        value: serde_json::Value,
    },
    /// Requests the recorded run as CSV.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd(VelocityCommand),
    Control(ControlAction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub config_hash: String,
    pub params: CbfParams,
    pub max_speed: f64,
    pub dt: f64,
    /// `true` for the client whose commands are applied.
    pub controller: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub step: u64,
    pub t: f64,
    pub p: [f64; 3],
    pub v: [f64; 3],
    pub yaw: f64,
    /// Velocity setpoint in effect (inertial frame), after clamping and failsafe.
    pub v_sp: [f64; 3],
    pub a_sp: [f64; 3],
    pub a_star: [f64; 3],
    pub h: Option<f64>,
    pub h_f1: f64,
    pub h_f2: f64,
    pub eta: Option<f64>,
    pub n_obstacles: usize,
    /// Decimated buffer contents, inertial frame.
    pub points: Vec<[f64; 3]>,
    pub distance: f64,
    pub filter_enabled: bool,
    pub running: bool,
    pub collided: bool,
    /// Latest client sequence number that has reached the controller.
    pub cmd_seq: Option<u64>,
    /// Control steps between a command's arrival and the step that first used it.
    pub cmd_latency_steps: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    State(StateSnapshot),
    Error { message: String },
    Log { csv: String },
}
