//! Tuning parameters of the safety filter and their validation.

use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// All scalar gains of the composite obstacle CBF, the FoV CBFs, the
/// chattering low-pass and the soft-constrained QP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbfParams {
    /// Avoidance radius around every measured point (m).
    pub epsilon: f64,
    /// Soft-min sharpness of the log-sum-exp composition.
    pub kappa: f64,
    /// Saturation scale of the tanh applied to each ECBF.
    pub gamma: f64,
    /// Extended class-K gain of the obstacle constraint (1/s).
    pub alpha: f64,
    /// ECBF pole (1/s, negative).
    pub p0: f64,
    /// Class-K gain of the FoV constraints (1/s).
    pub alpha_f: f64,
    /// Time constant of the pre/post low-pass filters (s).
    pub tau: f64,
    /// Linear penalty on FoV slacks.
    pub rho: f64,
    /// QP weight on the acceleration deviation, row-major.
    pub weight: [[f64; 3]; 3],
    /// Horizontal half-angle of the sensor frustum (rad).
    pub fov_half_angle: f64,
}

impl Default for CbfParams {
    /// Values used during the reference flight experiments, an identity
    /// weight, `rho = 100` and a 50° frustum half-angle.
    fn default() -> Self {
        Self {
            epsilon: 0.7,
            kappa: 70.0,
            gamma: 40.0,
            alpha: 2.0,
            p0: -2.5,
            alpha_f: 6.0,
            tau: 0.5,
            rho: 100.0,
            weight: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            fov_half_angle: 50f64.to_radians(),
        }
    }
}

/// One violated hard bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: &'static str,
    pub symbol: &'static str,
    pub value: f64,
    pub bound: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}) = {} violates required range {}",
            self.key, self.symbol, self.value, self.bound
        )
    }
}

/// A parameter that is admissible but outside the range recommended for tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeAdvice {
    pub key: &'static str,
    pub value: f64,
    pub low: f64,
    pub high: f64,
    pub effect: &'static str,
}

impl fmt::Display for RangeAdvice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} is outside the usual tuning range [{}, {}] (increasing it: {})",
            self.key, self.value, self.low, self.high, self.effect
        )
    }
}

impl CbfParams {
    /// Table-driven set of hard bounds. Every violation is reported, not just the first.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key, symbol, value, bound| {
            if !(ok && f64::is_finite(value)) {
                out.push(Violation {
                    key,
                    symbol,
                    value,
                    bound,
                });
            }
        };
        check(self.epsilon > 0.0, "epsilon", "ε", self.epsilon, "> 0");
        check(self.kappa > 0.0, "kappa", "κ", self.kappa, "> 0");
        check(self.gamma >= 1.0, "gamma", "γ", self.gamma, ">= 1");
        check(self.alpha > 0.0, "alpha", "α", self.alpha, "> 0");
        check(self.p0 < 0.0, "p0", "p₀", self.p0, "< 0");
        check(self.alpha_f > 0.0, "alpha_f", "α_f", self.alpha_f, "> 0");
        check(self.tau > 0.0, "tau", "τ", self.tau, "> 0");
        check(self.rho > 0.0, "rho", "ρ", self.rho, "> 0");
        check(
            self.fov_half_angle > 0.0 && self.fov_half_angle < std::f64::consts::FRAC_PI_2,
            "fov_half_angle",
            "θ",
            self.fov_half_angle,
            "(0, π/2)",
        );
        if !self.weight_is_spd() {
            out.push(Violation {
                key: "weight",
                symbol: "H",
                value: f64::NAN,
                bound: "symmetric positive-definite",
            });
        }
        out
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamError(v))
        }
    }

    /// Recommended tuning ranges. Departures are legal and only reported.
    pub fn range_advice(&self) -> Vec<RangeAdvice> {
        let table: [(&'static str, f64, f64, f64, &'static str); 6] = [
            (
                "kappa",
                self.kappa,
                10.0,
                100.0,
                "less smooth approximation",
            ),
            (
                "gamma",
                self.gamma,
                10.0,
                100.0,
                "reacts to farther obstacles",
            ),
            (
                "alpha",
                self.alpha,
                1.0,
                3.0,
                "increased filter sensitivity",
            ),
            ("p0", self.p0, -3.0, -1.0, "damped response"),
            ("alpha_f", self.alpha_f, 2.0, 8.0, "aggressive FoV response"),
            (
                "tau",
                self.tau,
                0.01,
                0.1,
                "stronger acceleration smoothing",
            ),
        ];
        table
            .into_iter()
            .filter(|&(_, v, lo, hi, _)| !(lo..=hi).contains(&v))
            .map(|(key, value, low, high, effect)| RangeAdvice {
                key,
                value,
                low,
                high,
                effect,
            })
            .collect()
    }

    pub fn weight_matrix(&self) -> Matrix3<f64> {
        let w = &self.weight;
        Matrix3::new(
            w[0][0], w[0][1], w[0][2], w[1][0], w[1][1], w[1][2], w[2][0], w[2][1], w[2][2],
        )
    }

    fn weight_is_spd(&self) -> bool {
        let h = self.weight_matrix();
        h.iter().all(|x| x.is_finite())
            && (h - h.transpose()).amax() <= 1e-12 * h.amax().max(1.0)
            && h.cholesky().is_some()
    }

    /// `Some(c)` when the weight is `c·I`.
    pub fn isotropic_weight(&self) -> Option<f64> {
        let h = self.weight_matrix();
        let c = h[(0, 0)];
        ((h - Matrix3::identity() * c).amax() == 0.0 && c > 0.0).then_some(c)
    }
}

/// Hard-bound violations collected by [`CbfParams::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid CBF parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ParamError(pub Vec<Violation>);
