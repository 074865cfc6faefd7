//! Safety filtering of acceleration setpoints for double-integrator multirotors
//! with a composite control barrier function built from range measurements.
//!
//! The crate is organised bottom-up:
//!
//! - [`cbf`]: composite obstacle CBF, FoV CBFs, extended class-K function;
//! - [`qp`]: closed-form and active-set solutions of the filtering QP;
//! - [`pipeline`]: obstacle messages, circular buffer, low-pass filters and
//!   the full [`pipeline::SafetyFilter`] step;
//! - [`sim`]: deterministic closed-loop simulator and scenarios;
//! - [`log`], [`replay`], [`bench`], [`commands`]: run logs and the command-line workflows.

pub mod bench;
pub mod cbf;
pub mod commands;
pub mod log;
pub mod params;
pub mod pipeline;
pub mod qp;
pub mod replay;
pub mod sim;

pub use cbf::{CbfEvaluation, ObstacleSet, VehicleState};
pub use params::CbfParams;
