use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cbf::{wrap_angle, VehicleState};

/// How heading evolves. Translation never depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum YawMode {
    Hold,
    /// First-order tracking of the horizontal velocity heading.
    FaceVelocity {
        time_constant: f64,
        min_speed: f64,
    },
    /// First-order tracking of the heading of the reference velocity, so the
    /// sensor looks where the operator or planner is pushing.
    FaceReference {
        time_constant: f64,
        min_speed: f64,
    },
    /// Heading rate supplied every step by the caller (teleoperation).
    Rate,
}

impl Default for YawMode {
    fn default() -> Self {
        YawMode::FaceVelocity {
            time_constant: 0.3,
            min_speed: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Time constant of the acceleration tracking lag (s); 0 tracks exactly.
    pub tracking_lag: f64,
    pub yaw: YawMode,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            tracking_lag: 0.05,
            yaw: YawMode::default(),
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self, out: &mut Vec<String>) {
        if !(self.tracking_lag >= 0.0) {
            out.push("dynamics.tracking_lag must be ≥ 0".into());
        }
        if let YawMode::FaceVelocity {
            time_constant,
            min_speed,
        }
        | YawMode::FaceReference {
            time_constant,
            min_speed,
        } = self.yaw
        {
            if !(time_constant > 0.0 && min_speed >= 0.0) {
                out.push("dynamics.yaw needs time_constant > 0 and min_speed ≥ 0".into());
            }
        }
    }
}

fn turn_toward(
    yaw: f64,
    dir: Option<Vector3<f64>>,
    time_constant: f64,
    min_speed: f64,
    dt: f64,
) -> f64 {
    match dir {
        Some(d) if d.xy().norm() > min_speed => {
            yaw + wrap_angle(d.y.atan2(d.x) - yaw) * -(-dt / time_constant).exp_m1()
        }
        _ => yaw,
    }
}

/// Double integrator with a lagged acceleration response.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub vehicle: VehicleState,
    pub a_actual: Vector3<f64>,
}

impl PlantState {
    /// Advances by `dt` under command `a_cmd`. `yaw_rate` is used in rate
    /// mode, `v_ref` when facing the reference.
    pub fn step(
        &mut self,
        cfg: &DynamicsConfig,
        a_cmd: &Vector3<f64>,
        yaw_rate: f64,
        v_ref: Option<Vector3<f64>>,
        dt: f64,
    ) {
        let gain = if cfg.tracking_lag > 0.0 {
            -(-dt / cfg.tracking_lag).exp_m1()
        } else {
            1.0
        };
        self.a_actual += (a_cmd - self.a_actual) * gain;
        let v = &mut self.vehicle;
        v.velocity += self.a_actual * dt;
        v.position += v.velocity * dt;
        let yaw = match cfg.yaw {
            YawMode::Hold => v.yaw,
            YawMode::Rate => v.yaw + yaw_rate * dt,
            YawMode::FaceVelocity {
                time_constant,
                min_speed,
            } => turn_toward(v.yaw, Some(v.velocity), time_constant, min_speed, dt),
            YawMode::FaceReference {
                time_constant,
                min_speed,
            } => turn_toward(v.yaw, v_ref, time_constant, min_speed, dt),
        };
        v.yaw = wrap_angle(yaw);
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.vehicle.velocity.norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lag_reaches_ninety_five_percent_in_three_time_constants() {
        let cfg = DynamicsConfig {
            tracking_lag: 0.05,
            yaw: YawMode::Hold,
        };
        let mut s = PlantState::default();
        let cmd = Vector3::new(1.0, 0.0, 0.0);
        for _ in 0..15 {
            s.step(&cfg, &cmd, 0.0, None, 0.01);
        }
        assert!((s.a_actual.x - 0.95).abs() < 0.01, "{}", s.a_actual.x);
    }

    #[test]
    fn zero_lag_integrates_exactly() {
        let cfg = DynamicsConfig {
            tracking_lag: 0.0,
            yaw: YawMode::Hold,
        };
        let mut s = PlantState::default();
        s.step(&cfg, &Vector3::new(2.0, 0.0, 0.0), 0.0, None, 0.1);
        assert_eq!(s.vehicle.velocity.x, 0.2);
        assert!((s.vehicle.position.x - 0.02).abs() < 1e-15);
    }

    #[test]
    fn yaw_turns_toward_velocity() {
        let cfg = DynamicsConfig::default();
        let mut s = PlantState::default();
        s.vehicle.velocity = Vector3::new(0.0, 2.0, 0.0);
        for _ in 0..300 {
            s.step(&cfg, &Vector3::zeros(), 0.0, None, 0.01);
        }
        assert!((s.vehicle.yaw - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }
}
