use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::cbf::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("no velocity setpoint available")]
    MissingSetpoint,
}

/// Piecewise-constant inertial velocity setpoint, active from `t` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityWaypoint {
    pub t: f64,
    pub velocity: Vector3<f64>,
}

/// Horizontal ellipse `center + (a cos ωt, b sin ωt, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center: Vector3<f64>,
    pub semi_axes: Vector2<f64>,
    /// Time for one lap (s); negative runs clockwise.
    pub period: f64,
}

impl Ellipse {
    pub fn angular_rate(&self) -> f64 {
        std::f64::consts::TAU / self.period
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        let (s, c) = (self.angular_rate() * t).sin_cos();
        self.center + Vector3::new(self.semi_axes.x * c, self.semi_axes.y * s, 0.0)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        let w = self.angular_rate();
        let (s, c) = (w * t).sin_cos();
        Vector3::new(-w * self.semi_axes.x * s, w * self.semi_axes.y * c, 0.0)
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        let w2 = self.angular_rate().powi(2);
        let (s, c) = (self.angular_rate() * t).sin_cos();
        Vector3::new(-w2 * self.semi_axes.x * c, -w2 * self.semi_axes.y * s, 0.0)
    }

    pub fn peak_speed(&self) -> f64 {
        self.angular_rate().abs() * self.semi_axes.amax()
    }

    pub fn peak_acceleration(&self) -> f64 {
        self.angular_rate().powi(2) * self.semi_axes.amax()
    }

    /// Period giving the requested peak speed.
    pub fn period_for_peak_speed(semi_axes: &Vector2<f64>, speed: f64) -> f64 {
        std::f64::consts::TAU * semi_axes.amax() / speed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    VelocitySchedule {
        waypoints: Vec<VelocityWaypoint>,
    },
    /// Velocity setpoints supplied externally at every step.
    External,
    Ellipse(Ellipse),
}

/// Nominal (safety-unaware) PD controller producing the acceleration setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalController {
    #[serde(default = "default_kp")]
    pub kp: f64,
    #[serde(default = "default_kv")]
    pub kv: f64,
    pub reference: Reference,
}

fn default_kp() -> f64 {
    4.0
}

fn default_kv() -> f64 {
    4.0
}

impl NominalController {
    pub fn velocity_setpoint(
        &self,
        t: f64,
        external: Option<Vector3<f64>>,
    ) -> Result<Vector3<f64>, ControllerError> {
        match &self.reference {
            Reference::VelocitySchedule { waypoints } => waypoints
                .iter()
                .take_while(|w| w.t <= t)
                .last()
                .map(|w| w.velocity)
                .ok_or(ControllerError::MissingSetpoint),
            Reference::External => external.ok_or(ControllerError::MissingSetpoint),
            Reference::Ellipse(e) => Ok(e.velocity(t)),
        }
    }

    /// Inertial acceleration setpoint at time `t`.
    pub fn acceleration(
        &self,
        state: &VehicleState,
        t: f64,
        external: Option<Vector3<f64>>,
    ) -> Result<Vector3<f64>, ControllerError> {
        match &self.reference {
            Reference::Ellipse(e) => Ok(e.acceleration(t)
                + (e.position(t) - state.position) * self.kp
                + (e.velocity(t) - state.velocity) * self.kv),
            _ => Ok((self.velocity_setpoint(t, external)? - state.velocity) * self.kv),
        }
    }

    /// Position error for trajectory references, velocity error otherwise.
    pub fn tracking_error(
        &self,
        state: &VehicleState,
        t: f64,
        external: Option<Vector3<f64>>,
    ) -> Option<f64> {
        match &self.reference {
            Reference::Ellipse(e) => Some((e.position(t) - state.position).norm()),
            _ => self
                .velocity_setpoint(t, external)
                .ok()
                .map(|v| (v - state.velocity).norm()),
        }
    }

    pub fn validate(&self, out: &mut Vec<String>) {
        if !(self.kp > 0.0 && self.kv > 0.0) {
            out.push("controller gains kp and kv must be > 0".into());
        }
        match &self.reference {
            Reference::VelocitySchedule { waypoints } => {
                if waypoints.is_empty() {
                    out.push("controller.reference.waypoints must not be empty".into());
                }
                if waypoints.windows(2).any(|w| w[1].t < w[0].t) {
                    out.push("controller.reference.waypoints must be sorted by t".into());
                }
            }
            Reference::Ellipse(e) => {
                if !(e.semi_axes.min() > 0.0 && e.period != 0.0 && e.period.is_finite()) {
                    out.push("controller.reference ellipse needs positive semi-axes and a nonzero period".into());
                }
            }
            Reference::External => {}
        }
    }
}
