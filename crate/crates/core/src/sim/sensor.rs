use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::world::World;
use crate::cbf::{rotation_vi, VehicleState};

/// Forward-looking depth sensor sampled on a regular ray grid. Rays that hit
/// nothing within range produce no return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub max_range: f64,
    pub azimuth_half_angle: f64,
    pub elevation_half_angle: f64,
    pub azimuth_rays: usize,
    pub elevation_rays: usize,
    pub rate_hz: f64,
    /// Standard deviation of additive range noise (m).
    pub range_noise_std: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 5.0,
            azimuth_half_angle: 50f64.to_radians(),
            elevation_half_angle: 35f64.to_radians(),
            azimuth_rays: 65,
            elevation_rays: 25,
            rate_hz: 15.0,
            range_noise_std: 0.0,
        }
    }
}

/// `n` angles spread evenly over `[-half, half]`; odd `n` includes 0 exactly.
fn grid(half: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.0
        } else {
            half * (2.0 * i as f64 / (n - 1) as f64 - 1.0)
        }
    })
}

impl SensorModel {
    /// Unit ray directions in the vehicle frame.
    pub fn ray_directions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.azimuth_rays * self.elevation_rays);
        for el in grid(self.elevation_half_angle, self.elevation_rays) {
            for az in grid(self.azimuth_half_angle, self.azimuth_rays) {
                out.push(Vector3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                ));
            }
        }
        out
    }

    /// Returns in the vehicle frame, at the world time `t`.
    pub fn scan<R: Rng>(
        &self,
        world: &World,
        state: &VehicleState,
        t: f64,
        rng: &mut R,
    ) -> Vec<Vector3<f64>> {
        let r_iv = rotation_vi(state.yaw).transpose();
        let noise = (self.range_noise_std > 0.0)
            .then(|| Normal::new(0.0, self.range_noise_std).expect("positive std"));
        let mut out = Vec::new();
        for d in self.ray_directions() {
            let Some(mut range) = world.ray_cast(&state.position, &(r_iv * d), self.max_range, t)
            else {
                continue;
            };
            if let Some(n) = &noise {
                range = (range + n.sample(rng)).clamp(0.0, self.max_range);
            }
            out.push(d * range);
        }
        out
    }

    /// Control steps between scans, rounded to the nearest whole step.
    pub fn scan_period_steps(&self, dt: f64) -> u64 {
        ((1.0 / (self.rate_hz * dt)).round() as u64).max(1)
    }

    pub fn validate(&self, out: &mut Vec<String>) {
        if !(self.max_range > 0.0) {
            out.push("sensor.max_range must be > 0".into());
        }
        if !(self.azimuth_half_angle > 0.0 && self.azimuth_half_angle < std::f64::consts::PI) {
            out.push("sensor.azimuth_half_angle must lie in (0, π)".into());
        }
        if !(self.elevation_half_angle > 0.0
            && self.elevation_half_angle < std::f64::consts::FRAC_PI_2)
        {
            out.push("sensor.elevation_half_angle must lie in (0, π/2)".into());
        }
        if self.azimuth_rays == 0 || self.elevation_rays == 0 {
            out.push("sensor ray counts must be ≥ 1".into());
        }
        if !(self.rate_hz > 0.0) {
            out.push("sensor.rate_hz must be > 0".into());
        }
        if !(self.range_noise_std >= 0.0) {
            out.push("sensor.range_noise_std must be ≥ 0".into());
        }
    }
}
