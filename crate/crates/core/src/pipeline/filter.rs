use std::time::Instant;

use nalgebra::{RowVector3, Vector3};
use serde::{Deserialize, Serialize};

use super::buffer::ObstacleBuffer;
use super::lowpass::LowPassState;
use crate::cbf::{evaluate, rotation_vi, CbfEvaluation, VehicleState};
use crate::params::CbfParams;
use crate::qp::{solve_analytic, solve_constrained, FilterProblem, QpError, ACTIVE_OBSTACLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Closed form whenever the problem allows it (no FoV rows, isotropic weight).
    #[default]
    Analytic,
    /// Always the soft-constrained QP.
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    Bypass,
    PassThrough,
    Analytic,
    Constrained,
    /// The QP failed and the closed form was used instead.
    Fallback(QpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telemetry {
    pub h: Option<f64>,
    pub lf_h: Option<f64>,
    pub lg_h: Option<RowVector3<f64>>,
    pub h_f: [f64; 2],
    pub eta: Option<f64>,
    pub active_set: u8,
    pub slacks: [f64; 2],
    pub n_obstacles: usize,
    pub path: SolverPath,
    pub qp_iterations: usize,
    pub compute_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub a_star: Vector3<f64>,
    /// Pre-filtered setpoint that entered the QP (inertial frame).
    pub a_sp_filtered: Vector3<f64>,
    pub telemetry: Telemetry,
}

/// One safety-filter instance: parameters, solve mode and the two low-pass states.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    params: CbfParams,
    mode: SolveMode,
    fov_enabled: bool,
    enabled: bool,
    measure_time: bool,
    prefilter: LowPassState,
    postfilter: LowPassState,
    points: Vec<Vector3<f64>>,
}

impl SafetyFilter {
    pub fn new(params: CbfParams, mode: SolveMode, fov_enabled: bool) -> Self {
        Self {
            params,
            mode,
            fov_enabled,
            enabled: true,
            measure_time: false,
            prefilter: LowPassState::new(params.tau),
            postfilter: LowPassState::new(params.tau),
            points: Vec::with_capacity(256),
        }
    }

    /// Records wall-clock compute time in the telemetry (off by default so
    /// that outputs stay bit-reproducible).
    pub fn with_timing(mut self, on: bool) -> Self {
        self.measure_time = on;
        self
    }

    pub fn params(&self) -> &CbfParams {
        &self.params
    }

    pub fn set_params(&mut self, params: CbfParams) {
        self.params = params;
        self.prefilter.tau = params.tau;
        self.postfilter.tau = params.tau;
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    pub fn fov_enabled(&self) -> bool {
        self.fov_enabled
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn set_enabled(&mut self, on: bool) {
        self.enabled = on;
    }

    pub fn reset(&mut self) {
        self.prefilter.reset(Vector3::zeros());
        self.postfilter.reset(Vector3::zeros());
    }

    /// Filters the nominal setpoint `a_sp` (inertial frame) at `state`.
    pub fn step(
        &mut self,
        state: &VehicleState,
        buffer: &ObstacleBuffer,
        a_sp: &Vector3<f64>,
        dt: f64,
    ) -> FilterOutput {
        let start = self.measure_time.then(Instant::now);
        buffer.snapshot_into(&mut self.points);
        let eval = evaluate(&self.points, state, &self.params);
        let mut telemetry = Telemetry {
            h: eval.obstacle.map(|c| c.h),
            lf_h: eval.obstacle.map(|c| c.lf_h),
            lg_h: eval.obstacle.map(|c| c.lg_h),
            h_f: eval.fov.h,
            eta: None,
            active_set: 0,
            slacks: [0.0; 2],
            n_obstacles: self.points.len(),
            path: SolverPath::Bypass,
            qp_iterations: 0,
            compute_ns: 0,
        };

        let (a_sp_filtered, a_star) = if self.enabled {
            let a_pre = self.prefilter.step(a_sp, dt);
            let a_safe = self.solve(state, &eval, &a_pre, &mut telemetry);
            (a_pre, self.postfilter.step(&a_safe, dt))
        } else {
            self.prefilter.reset(*a_sp);
            self.postfilter.reset(*a_sp);
            (*a_sp, *a_sp)
        };

        if let Some(t0) = start {
            telemetry.compute_ns = t0.elapsed().as_nanos() as u64;
        }
        FilterOutput {
            a_star,
            a_sp_filtered,
            telemetry,
        }
    }

    fn solve(
        &self,
        state: &VehicleState,
        eval: &CbfEvaluation,
        a_pre: &Vector3<f64>,
        telemetry: &mut Telemetry,
    ) -> Vector3<f64> {
        // The QP lives in the vehicle frame, where the obstacle gradient is expressed.
        let r_vi = rotation_vi(state.yaw);
        let a_body = r_vi * a_pre;
        let mut body_eval = *eval;
        body_eval.fov.lg_h = eval.fov.lg_h.map(|row| row * r_vi.transpose());

        let closed_form = self.mode == SolveMode::Analytic
            && !self.fov_enabled
            && self.params.isotropic_weight().is_some();

        let analytic = |telemetry: &mut Telemetry| match &body_eval.obstacle {
            Some(cbf) => {
                let sol = solve_analytic(&a_body, cbf, &self.params);
                telemetry.eta = Some(sol.eta);
                if sol.eta > 0.0 {
                    telemetry.active_set = ACTIVE_OBSTACLE;
                }
                sol.a_star
            }
            None => a_body,
        };

        let a_body_star = if closed_form {
            telemetry.path = if body_eval.obstacle.is_some() {
                SolverPath::Analytic
            } else {
                SolverPath::PassThrough
            };
            analytic(telemetry)
        } else {
            let result =
                FilterProblem::from_evaluation(a_body, &body_eval, &self.params, self.fov_enabled)
                    .and_then(|p| solve_constrained(&p));
            match result {
                Ok(sol) => {
                    telemetry.path = SolverPath::Constrained;
                    telemetry.active_set = sol.active_set;
                    telemetry.slacks = sol.slacks;
                    telemetry.qp_iterations = sol.iterations;
                    sol.a_star
                }
                Err(e) => {
                    telemetry.path = SolverPath::Fallback(e);
                    analytic(telemetry)
                }
            }
        };
        r_vi.transpose() * a_body_star
    }
}
