//! WebSocket teleoperation of the simulated vehicle.
//!
//! A fixed-rate simulation task owns the [`Session`] and exchanges values
//! with the connection tasks through a bounded request queue and `watch`
//! snapshots. The first client to connect controls the vehicle; later
//! clients only observe. See [`protocol`] for the frame formats.

mod client;
pub mod protocol;
mod server;
mod session;

pub use client::{run_script, ClientError, Script, ScriptRun, TimedMessage};
pub use server::{TeleopError, TeleopServer, DEFAULT_BIND};
pub use session::{clamp_speed, failsafe_gain, Session, SessionError, TeleopOptions};
