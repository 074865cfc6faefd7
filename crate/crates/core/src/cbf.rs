//! Composite obstacle CBF, field-of-view CBFs and the extended class-K function.
//!
//! Everything here is evaluated in the body frame from the relative obstacle
//! positions the range sensor reports, so none of it needs the vehicle's
//! inertial position. For the point-mass model the body frame coincides with
//! the yaw-aligned vehicle frame.
//!
//! For a measured point `r` (body frame) and body velocity `v`:
//!
//! ```text
//! ν₀(r)    = ‖r‖² − ε²
//! ν₁(r, v) = −2 vᵀr − p₀ ν₀(r)
//! h        = −(γ/κ) ln Σᵢ exp(−κ tanh(ν₁ᵢ / γ))
//! ```
//!
//! The functions are pure and never allocate.

use std::f64::consts::PI;

use nalgebra::{Matrix3, RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use crate::params::CbfParams;

/// Default capacity of an [`ObstacleSet`].
pub const DEFAULT_OBSTACLE_CAPACITY: usize = 100;

/// Position, velocity and heading of the vehicle in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Heading of the yaw-aligned vehicle frame, in (−π, π].
    pub yaw: f64,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            yaw: 0.0,
        }
    }
}

impl VehicleState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            velocity,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .all(|x| x.is_finite())
            && self.yaw.is_finite()
    }

    /// Velocity expressed in the vehicle frame.
    pub fn body_velocity(&self) -> Vector3<f64> {
        rotation_vi(self.yaw) * self.velocity
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w == -PI {
        w = PI;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CbfError {
    #[error("obstacle set is empty")]
    EmptyObstacleSet,
    #[error("obstacle set is full (capacity {0})")]
    CapacityExceeded(usize),
    #[error("obstacle point is not finite")]
    NonFinitePoint,
    #[error("obstacle point lies beyond the sensor range")]
    OutOfRange,
}

/// Fixed-capacity collection of body-frame obstacle points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSet {
    points: Vec<Vector3<f64>>,
    capacity: usize,
    max_range: f64,
}

impl ObstacleSet {
    pub fn new(capacity: usize, max_range: f64) -> Self {
        Self {
            points: Vec::with_capacity(capacity),
            capacity,
            max_range,
        }
    }

    pub fn try_push(&mut self, p: Vector3<f64>) -> Result<(), CbfError> {
        if self.points.len() >= self.capacity {
            return Err(CbfError::CapacityExceeded(self.capacity));
        }
        if !p.iter().all(|x| x.is_finite()) {
            return Err(CbfError::NonFinitePoint);
        }
        if p.norm() > self.max_range {
            return Err(CbfError::OutOfRange);
        }
        self.points.push(p);
        Ok(())
    }

    pub fn from_points(
        points: impl IntoIterator<Item = Vector3<f64>>,
        capacity: usize,
        max_range: f64,
    ) -> Result<Self, CbfError> {
        let mut set = Self::new(capacity, max_range);
        for p in points {
            set.try_push(p)?;
        }
        Ok(set)
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }
}

/// Value and Lie derivatives of the composite obstacle CBF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCbf {
    pub h: f64,
    pub lf_h: f64,
    /// Gradient of ḣ with respect to the body-frame acceleration.
    pub lg_h: RowVector3<f64>,
}

/// Both horizontal FoV CBFs. Index 0 is bounded by the normal
/// `(sin θ, cos θ, 0)`, index 1 by `(sin θ, −cos θ, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovCbf {
    pub h: [f64; 2],
    pub lg_h: [RowVector3<f64>; 2],
}

/// Full evaluation at one state. `obstacle` is `None` when no point is measured,
/// in which case the obstacle constraint is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfEvaluation {
    pub obstacle: Option<ObstacleCbf>,
    pub fov: FovCbf,
}

/// Squared-distance margin of one body-frame point.
#[inline]
pub fn nu0(p_obs: &Vector3<f64>, params: &CbfParams) -> f64 {
    p_obs.norm_squared() - params.epsilon * params.epsilon
}

/// First ECBF layer of one body-frame point.
#[inline]
pub fn nu1(p_obs: &Vector3<f64>, v_body: &Vector3<f64>, params: &CbfParams) -> f64 {
    -2.0 * v_body.dot(p_obs) - params.p0 * nu0(p_obs, params)
}

#[inline]
fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// Composite CBF over all points via a max-shifted log-sum-exp.
///
/// With `zᵢ = −κ tanh(ν₁ᵢ/γ)` and `m = maxᵢ zᵢ`, the sum and the weights are
/// accumulated as `exp(zᵢ − m)` in a single pass, rescaling the partial sums
/// whenever a new maximum appears. The weights `λᵢ/Λ` are shift invariant.
pub fn composite_cbf(
    points: &[Vector3<f64>],
    v_body: &Vector3<f64>,
    params: &CbfParams,
) -> Result<ObstacleCbf, CbfError> {
    if points.is_empty() {
        return Err(CbfError::EmptyObstacleSet);
    }
    let (kappa, gamma, p0) = (params.kappa, params.gamma, params.p0);
    let vv = v_body.dot(v_body);

    let mut shift = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut lf = 0.0;
    let mut lg = RowVector3::zeros();
    for p in points {
        let x = nu1(p, v_body, params) / gamma;
        let z = -kappa * x.tanh();
        if z > shift {
            // Rescale partial sums to the new maximum (first pass: everything is zero).
            let scale = if shift.is_finite() {
                (shift - z).exp()
            } else {
                0.0
            };
            sum *= scale;
            lf *= scale;
            lg *= scale;
            shift = z;
        }
        let e = (z - shift).exp();
        let lambda = e * sech2(x);
        sum += e;
        lf += lambda * 2.0 * (vv + p0 * v_body.dot(p));
        lg -= p.transpose() * (2.0 * lambda);
    }
    Ok(ObstacleCbf {
        h: -(gamma / kappa) * (shift + sum.ln()),
        lf_h: lf / sum,
        lg_h: lg / sum,
    })
}

/// `gain·h` on the safe side, `h / (1/gain + |h|)` on the unsafe side.
#[inline]
pub fn extended_class_k(h: f64, gain: f64) -> f64 {
    if h >= 0.0 {
        gain * h
    } else {
        h / (1.0 / gain + h.abs())
    }
}

/// Rotation taking inertial vectors into the yaw-aligned vehicle frame.
pub fn rotation_vi(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Inward-facing normals of the two horizontal frustum planes, vehicle frame.
pub fn fov_normals(half_angle: f64) -> [Vector3<f64>; 2] {
    let (s, c) = half_angle.sin_cos();
    [Vector3::new(s, c, 0.0), Vector3::new(s, -c, 0.0)]
}

/// FoV CBFs `e_jᵀ R_VI v` and their input gradients `e_jᵀ R_VI` (inertial
/// acceleration). The drift term is neglected: `L_f h_fj = 0`.
pub fn fov_cbf(state: &VehicleState, params: &CbfParams) -> FovCbf {
    let r = rotation_vi(state.yaw);
    let normals = fov_normals(params.fov_half_angle);
    let lg = normals.map(|e| e.transpose() * r);
    FovCbf {
        h: [lg[0] * state.velocity, lg[1] * state.velocity].map(|m| m[0]),
        lg_h: lg,
    }
}

/// Evaluates the obstacle and FoV parts at `state` for body-frame `points`.
pub fn evaluate(
    points: &[Vector3<f64>],
    state: &VehicleState,
    params: &CbfParams,
) -> CbfEvaluation {
    let v_body = state.body_velocity();
    CbfEvaluation {
        obstacle: composite_cbf(points, &v_body, params).ok(),
        fov: fov_cbf(state, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn params() -> CbfParams {
        CbfParams::default()
    }

    #[test]
    fn nu0_examples() {
        let p = params();
        assert_eq!(nu0(&Vector3::new(p.epsilon, 0.0, 0.0), &p), 0.0);
        assert_relative_eq!(nu0(&Vector3::new(2.0, 0.0, 0.0), &p), 3.51, epsilon = 1e-15);
        assert_relative_eq!(nu0(&Vector3::zeros(), &p), -0.49, epsilon = 1e-15);
    }

    #[test]
    fn nu1_examples() {
        let p = params();
        let r = Vector3::new(2.0, 0.0, 0.0);
        assert_relative_eq!(nu1(&r, &Vector3::zeros(), &p), 8.775, epsilon = 1e-12);
        assert_relative_eq!(nu1(&r, &Vector3::x(), &p), 4.775, epsilon = 1e-12);
        assert_relative_eq!(nu1(&r, &-Vector3::x(), &p), 12.775, epsilon = 1e-12);
    }

    #[test]
    fn single_point_composite_matches_reference_value() {
        // Frozen from a direct scalar evaluation of the composite formula.
        let p = params();
        let c = composite_cbf(&[Vector3::new(2.0, 0.0, 0.0)], &Vector3::zeros(), &p).unwrap();
        assert_relative_eq!(c.h, 8.636891239667012, epsilon = 1e-12);
        assert_relative_eq!(c.h, p.gamma * (8.775f64 / p.gamma).tanh(), epsilon = 1e-12);
    }

    #[test]
    fn repeated_points_subtract_log_k() {
        let p = params();
        let r = Vector3::new(1.5, -0.3, 0.2);
        let v = Vector3::new(0.4, 0.1, 0.0);
        let single = composite_cbf(&[r], &v, &p).unwrap();
        let k = 7;
        let many = composite_cbf(&vec![r; k], &v, &p).unwrap();
        assert_relative_eq!(
            many.h,
            single.h - p.gamma / p.kappa * (k as f64).ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(many.lf_h, single.lf_h, epsilon = 1e-12);
        assert_relative_eq!((many.lg_h - single.lg_h).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_set_is_reported() {
        assert_eq!(
            composite_cbf(&[], &Vector3::zeros(), &params()),
            Err(CbfError::EmptyObstacleSet)
        );
        assert!(evaluate(&[], &VehicleState::default(), &params())
            .obstacle
            .is_none());
    }

    #[test]
    fn obstacle_at_origin_has_zero_input_gradient() {
        let c = composite_cbf(&[Vector3::zeros()], &Vector3::x(), &params()).unwrap();
        assert_eq!(c.lg_h, RowVector3::zeros());
        assert!(c.h.is_finite() && c.lf_h.is_finite());
    }

    #[test]
    fn class_k_examples() {
        assert_eq!(extended_class_k(0.0, 3.0), 0.0);
        assert_eq!(extended_class_k(1.0, 2.0), 2.0);
        assert_relative_eq!(extended_class_k(-1.0, 2.0), -2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn class_k_is_continuous_at_zero() {
        for gain in [0.5, 2.0, 6.0] {
            let left = extended_class_k(-1e-8, gain);
            let right = extended_class_k(1e-8, gain);
            assert!((left + right).abs() < 1e-12, "{left} {right}");
        }
    }

    #[test]
    fn fov_examples() {
        let p = CbfParams {
            fov_half_angle: FRAC_PI_4,
            ..params()
        };
        let hover = fov_cbf(&VehicleState::default(), &p);
        assert_eq!(hover.h, [0.0, 0.0]);

        let fwd = fov_cbf(&VehicleState::new(Vector3::zeros(), Vector3::x(), 0.0), &p);
        assert_relative_eq!(fwd.h[0], FRAC_PI_4.sin(), epsilon = 1e-15);
        assert_relative_eq!(fwd.h[1], FRAC_PI_4.sin(), epsilon = 1e-15);

        let side = fov_cbf(&VehicleState::new(Vector3::zeros(), Vector3::y(), 0.0), &p);
        assert_relative_eq!(side.h[0], FRAC_PI_4.cos(), epsilon = 1e-15);
        assert_relative_eq!(side.h[1], -FRAC_PI_4.cos(), epsilon = 1e-15);
    }

    #[test]
    fn fov_follows_yaw() {
        // Flying along +y while facing +y is straight ahead.
        let p = params();
        let s = VehicleState::new(Vector3::zeros(), Vector3::y(), std::f64::consts::FRAC_PI_2);
        let f = fov_cbf(&s, &p);
        assert_relative_eq!(f.h[0], p.fov_half_angle.sin(), epsilon = 1e-12);
        assert_relative_eq!(f.h[1], p.fov_half_angle.sin(), epsilon = 1e-12);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_vi(0.0), Matrix3::identity());
        let q = rotation_vi(std::f64::consts::FRAC_PI_2) * Vector3::y();
        assert_relative_eq!((q - Vector3::x()).amax(), 0.0, epsilon = 1e-15);
        for yaw in [-3.0, -1.0, 0.3, 2.0, 3.1] {
            let r = rotation_vi(yaw);
            assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn obstacle_set_enforces_invariants() {
        let mut s = ObstacleSet::new(2, 5.0);
        assert_eq!(
            s.try_push(Vector3::new(6.0, 0.0, 0.0)),
            Err(CbfError::OutOfRange)
        );
        assert_eq!(
            s.try_push(Vector3::new(f64::NAN, 0.0, 0.0)),
            Err(CbfError::NonFinitePoint)
        );
        s.try_push(Vector3::x()).unwrap();
        s.try_push(Vector3::y()).unwrap();
        assert_eq!(s.try_push(Vector3::z()), Err(CbfError::CapacityExceeded(2)));
        assert_eq!(s.len(), 2);
    }
}
