//! Minimally-invasive filtering problems.
//!
//! [`solve_analytic`] handles the isotropic obstacle-only case in closed form.
//! [`solve_constrained`] solves the full soft-constrained problem
//!
//! ```text
//! min  (a − a_sp)ᵀ H (a − a_sp) + ρ Σⱼ δⱼ
//! s.t. L_g h · a        ≥ −L_f h − α(h)        (hard)
//!      L_g h_fj · a + δⱼ ≥ −α_f h_fj            (soft, j ≤ 2)
//!      δⱼ ≥ 0
//! ```
//!
//! with a primal active-set method on `z = (a, δ)`. Every slack always has
//! either its soft row or its `δⱼ ≥ 0` bound in the working set, which keeps
//! the reduced Hessian positive definite even though `δ` only enters linearly.

use nalgebra::{Matrix3, RowVector3, SMatrix, SVector, Vector3};

use crate::cbf::{extended_class_k, CbfEvaluation, ObstacleCbf};
use crate::params::CbfParams;

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const KKT_TOLERANCE: f64 = 1e-8;

/// Squared gradient norms at or below this are treated as a zero gradient.
const ZERO_GRADIENT_SQ: f64 = 1e-18;

/// Linear constraint `lg · a ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub lg: RowVector3<f64>,
    pub rhs: f64,
}

impl ConstraintRow {
    pub fn residual(&self, a: &Vector3<f64>) -> f64 {
        (self.lg * a)[0] - self.rhs
    }

    /// Obstacle row `L_g h · a ≥ −L_f h − α(h)`.
    pub fn obstacle(cbf: &ObstacleCbf, alpha: f64) -> Self {
        Self {
            lg: cbf.lg_h,
            rhs: -cbf.lf_h - extended_class_k(cbf.h, alpha),
        }
    }

    /// FoV row `L_g h_f · a ≥ −α_f h_f` (drift neglected).
    pub fn fov(lg: RowVector3<f64>, h: f64, alpha_f: f64) -> Self {
        Self {
            lg,
            rhs: -alpha_f * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QpError {
    #[error("filter problem has non-finite data")]
    NonFinite,
    #[error("QP weight is not symmetric positive-definite")]
    WeightNotSpd,
    #[error("slack penalty must be positive")]
    NonPositivePenalty,
    #[error("hard obstacle constraint cannot be satisfied")]
    Infeasible,
    #[error("active-set iteration cap of {0} reached")]
    MaxIterations(usize),
}

/// A validated instance of the soft-constrained filtering QP.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterProblem {
    pub a_sp: Vector3<f64>,
    pub obstacle: Option<ConstraintRow>,
    pub fov: [Option<ConstraintRow>; 2],
    pub weight: Matrix3<f64>,
    pub rho: f64,
}

impl FilterProblem {
    pub fn new(
        a_sp: Vector3<f64>,
        obstacle: Option<ConstraintRow>,
        fov: [Option<ConstraintRow>; 2],
        weight: Matrix3<f64>,
        rho: f64,
    ) -> Result<Self, QpError> {
        let rows = obstacle.iter().chain(fov.iter().flatten());
        let finite = a_sp.iter().all(|x| x.is_finite())
            && weight.iter().all(|x| x.is_finite())
            && rows
                .clone()
                .all(|r| r.rhs.is_finite() && r.lg.iter().all(|x| x.is_finite()));
        if !finite || !rho.is_finite() {
            return Err(QpError::NonFinite);
        }
        if !(rho > 0.0) {
            return Err(QpError::NonPositivePenalty);
        }
        if (weight - weight.transpose()).amax() > 1e-12 * weight.amax()
            || weight.cholesky().is_none()
        {
            return Err(QpError::WeightNotSpd);
        }
        Ok(Self {
            a_sp,
            obstacle,
            fov,
            weight,
            rho,
        })
    }

    /// Builds the problem the filter solves for `eval`, with every row in the
    /// body frame. FoV rows are included only when `with_fov` is set.
    pub fn from_evaluation(
        a_sp: Vector3<f64>,
        eval: &CbfEvaluation,
        params: &CbfParams,
        with_fov: bool,
    ) -> Result<Self, QpError> {
        let obstacle = eval
            .obstacle
            .map(|c| ConstraintRow::obstacle(&c, params.alpha));
        let fov = if with_fov {
            [0, 1].map(|j| {
                Some(ConstraintRow::fov(
                    eval.fov.lg_h[j],
                    eval.fov.h[j],
                    params.alpha_f,
                ))
            })
        } else {
            [None, None]
        };
        Self::new(a_sp, obstacle, fov, params.weight_matrix(), params.rho)
    }

    /// `(a − a_sp)ᵀ H (a − a_sp) + ρ Σ δ`.
    pub fn objective(&self, a: &Vector3<f64>, slacks: &[f64; 2]) -> f64 {
        let d = a - self.a_sp;
        d.dot(&(self.weight * d)) + self.rho * (slacks[0] + slacks[1])
    }

    /// Smallest admissible slacks for a given acceleration.
    pub fn min_slacks(&self, a: &Vector3<f64>) -> [f64; 2] {
        [0, 1].map(|j| self.fov[j].map_or(0.0, |r| (-r.residual(a)).max(0.0)))
    }

    pub fn is_feasible(&self, a: &Vector3<f64>, tol: f64) -> bool {
        self.obstacle.map_or(true, |r| r.residual(a) >= -tol)
    }
}

/// Bit 0: obstacle row; bits 1 and 2: FoV rows 0 and 1 (soft row tight).
pub type ActiveSet = u8;

pub const ACTIVE_OBSTACLE: ActiveSet = 1;
pub const ACTIVE_FOV: [ActiveSet; 2] = [2, 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSolution {
    pub a_star: Vector3<f64>,
    pub slacks: [f64; 2],
    pub active_set: ActiveSet,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Multiplier of the obstacle row and of the two soft FoV rows.
    pub multipliers: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSolution {
    pub a_star: Vector3<f64>,
    pub eta: f64,
}

/// Closed-form minimiser of `‖a − a_sp‖²` under the obstacle row alone.
pub fn solve_analytic(
    a_sp: &Vector3<f64>,
    cbf: &ObstacleCbf,
    params: &CbfParams,
) -> AnalyticSolution {
    let lg = cbf.lg_h;
    let norm_sq = lg.norm_squared();
    let eta = if norm_sq > ZERO_GRADIENT_SQ {
        -(cbf.lf_h + (lg * a_sp)[0] + extended_class_k(cbf.h, params.alpha)) / norm_sq
    } else {
        0.0
    };
    AnalyticSolution {
        a_star: a_sp + lg.transpose() * eta.max(0.0),
        eta,
    }
}

// z = (a₀, a₁, a₂, δ₀, δ₁). The two unused δ slots of a problem without FoV
// rows are pinned to zero by their bound rows.
const NZ: usize = 5;
// Constraint slots: 0 obstacle, 1–2 soft FoV rows, 3–4 slack bounds.
const NC: usize = 5;
const KKT: usize = NZ + NC;
type Vz = SVector<f64, NZ>;

struct Rows {
    normals: [Vz; NC],
    rhs: [f64; NC],
    present: [bool; NC],
}

impl Rows {
    fn build(problem: &FilterProblem) -> Result<Self, QpError> {
        let mut normals = [Vz::zeros(); NC];
        let mut rhs = [0.0; NC];
        let mut present = [false; NC];
        if let Some(r) = problem.obstacle {
            if r.lg.norm_squared() > ZERO_GRADIENT_SQ {
                normals[0]
                    .fixed_rows_mut::<3>(0)
                    .copy_from(&r.lg.transpose());
                rhs[0] = r.rhs;
                present[0] = true;
            } else if r.rhs > 0.0 {
                return Err(QpError::Infeasible);
            }
        }
        for j in 0..2 {
            if let Some(r) = problem.fov[j] {
                normals[1 + j]
                    .fixed_rows_mut::<3>(0)
                    .copy_from(&r.lg.transpose());
                normals[1 + j][3 + j] = 1.0;
                rhs[1 + j] = r.rhs;
                present[1 + j] = true;
            }
            normals[3 + j][3 + j] = 1.0;
            present[3 + j] = true;
        }
        Ok(Self {
            normals,
            rhs,
            present,
        })
    }

    fn residual(&self, i: usize, z: &Vz) -> f64 {
        self.normals[i].dot(z) - self.rhs[i]
    }
}

/// Solves the soft-constrained filtering QP to [`KKT_TOLERANCE`].
pub fn solve_constrained(problem: &FilterProblem) -> Result<FilterSolution, QpError> {
    solve_constrained_with_cap(problem, DEFAULT_MAX_ITERATIONS)
}

pub fn solve_constrained_with_cap(
    problem: &FilterProblem,
    max_iterations: usize,
) -> Result<FilterSolution, QpError> {
    let rows = Rows::build(problem)?;

    let mut hess = SMatrix::<f64, NZ, NZ>::zeros();
    hess.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(problem.weight * 2.0));
    let mut lin = Vz::zeros();
    lin.fixed_rows_mut::<3>(0)
        .copy_from(&(problem.weight * problem.a_sp * -2.0));
    for j in 0..2 {
        if problem.fov[j].is_some() {
            lin[3 + j] = problem.rho;
        }
    }

    // Feasible start: project a_sp onto the hard row if needed, then use the
    // smallest admissible slacks.
    let mut a0 = problem.a_sp;
    let mut working = [false; NC];
    if rows.present[0] {
        let r = problem.obstacle.expect("present row");
        let viol = -r.residual(&a0);
        if viol > 0.0 {
            a0 += r.lg.transpose() * (viol / r.lg.norm_squared());
            working[0] = true;
        }
    }
    let slacks = problem.min_slacks(&a0);
    let mut z = Vz::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&a0);
    for j in 0..2 {
        z[3 + j] = slacks[j];
        if rows.present[1 + j] && slacks[j] > 0.0 {
            working[1 + j] = true;
        } else {
            working[3 + j] = true;
        }
    }

    let scale = 1.0 + problem.a_sp.amax() + z.amax();
    for iteration in 1..=max_iterations {
        let grad = hess * z + lin;
        let (step, mult) = solve_eqp(&hess, &grad, &rows, &working);
        if step.amax() <= 1e-14 * scale {
            // Stationary on the working set: check multiplier signs.
            let mut drop: Option<(usize, f64)> = None;
            for i in 0..NC {
                if working[i] && mult[i] < drop.map_or(-1e-12 * scale, |d| d.1) {
                    drop = Some((i, mult[i]));
                }
            }
            match drop {
                Some((i, _)) => working[i] = false,
                None => {
                    return Ok(finish(
                        problem, &rows, &hess, &lin, &z, &working, &mult, iteration,
                    ))
                }
            }
            continue;
        }
        // Ratio test over rows outside the working set; ties keep the lowest index.
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..NC {
            if !rows.present[i] || working[i] {
                continue;
            }
            let slope = rows.normals[i].dot(&step);
            if slope < 0.0 {
                let ratio = (-rows.residual(i, &z) / slope).max(0.0);
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        z += step * alpha;
        if let Some(i) = blocking {
            working[i] = true;
        }
    }
    Err(QpError::MaxIterations(max_iterations))
}

/// Equality-constrained step: minimise ½pᵀQp + gᵀp with A_W p = 0.
/// Returns the step and the working-set multipliers (zero elsewhere).
fn solve_eqp(
    hess: &SMatrix<f64, NZ, NZ>,
    grad: &Vz,
    rows: &Rows,
    working: &[bool; NC],
) -> (Vz, [f64; NC]) {
    let mut k = SMatrix::<f64, KKT, KKT>::zeros();
    let mut rhs = SVector::<f64, KKT>::zeros();
    k.fixed_view_mut::<NZ, NZ>(0, 0).copy_from(hess);
    rhs.fixed_rows_mut::<NZ>(0).copy_from(&(-grad));
    for i in 0..NC {
        if working[i] {
            for c in 0..NZ {
                k[(c, NZ + i)] = -rows.normals[i][c];
                k[(NZ + i, c)] = rows.normals[i][c];
            }
        } else {
            k[(NZ + i, NZ + i)] = 1.0;
        }
    }
    let sol = k.lu().solve(&rhs).unwrap_or_else(SVector::zeros);
    let step = sol.fixed_rows::<NZ>(0).into_owned();
    let mut mult = [0.0; NC];
    for i in 0..NC {
        if working[i] {
            mult[i] = sol[NZ + i];
        }
    }
    (step, mult)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &FilterProblem,
    rows: &Rows,
    hess: &SMatrix<f64, NZ, NZ>,
    lin: &Vz,
    z: &Vz,
    working: &[bool; NC],
    lambda: &[f64; NC],
    iterations: usize,
) -> FilterSolution {
    let a_star = z.fixed_rows::<3>(0).into_owned();
    let slacks = [0, 1].map(|j| {
        if problem.fov[j].is_some() {
            z[3 + j].max(0.0)
        } else {
            0.0
        }
    });
    let mut active_set = 0;
    if working[0] {
        active_set |= ACTIVE_OBSTACLE;
    }
    for j in 0..2 {
        if working[1 + j] {
            active_set |= ACTIVE_FOV[j];
        }
    }
    let mut stationarity = hess * z + lin;
    for i in 0..NC {
        stationarity -= rows.normals[i] * lambda[i];
    }
    let mut residual = stationarity.amax();
    for i in 0..NC {
        if !rows.present[i] {
            continue;
        }
        let r = rows.residual(i, z);
        residual = residual.max(-r).max(-lambda[i]).max((lambda[i] * r).abs());
    }
    FilterSolution {
        a_star,
        slacks,
        active_set,
        kkt_residual: residual.max(0.0),
        iterations,
        multipliers: [lambda[0], lambda[1], lambda[2]],
    }
}

/// Independent KKT check of a candidate solution, with the multipliers
/// reconstructed by least squares over the rows that are tight at it.
pub fn kkt_residual(problem: &FilterProblem, sol: &FilterSolution) -> f64 {
    let a = sol.a_star;
    let d = 2.0 * problem.weight * (a - problem.a_sp);
    let obstacle = problem
        .obstacle
        .filter(|r| r.lg.norm_squared() > ZERO_GRADIENT_SQ);
    let mut residual = 0.0_f64;
    if let Some(r) = problem.obstacle {
        residual = residual.max(-r.residual(&a));
    }
    // Stationarity in δⱼ: a positive slack forces its multiplier to ρ.
    let mut target = d;
    let mut free: Vec<RowVector3<f64>> = Vec::new();
    let mut free_bounds: Vec<(f64, f64)> = Vec::new();
    for j in 0..2 {
        if let Some(r) = problem.fov[j] {
            let res = r.residual(&a) + sol.slacks[j];
            residual = residual.max(-res).max(-sol.slacks[j]);
            if sol.slacks[j] > 1e-12 {
                target -= r.lg.transpose() * problem.rho;
                residual = residual.max(res.abs());
            } else if res.abs() <= 1e-9 {
                free.push(r.lg);
                free_bounds.push((0.0, problem.rho));
            }
        }
    }
    if let Some(r) = obstacle {
        if r.residual(&a).abs() <= 1e-9 {
            free.push(r.lg);
            free_bounds.push((0.0, f64::INFINITY));
        }
    }
    // Least-squares multipliers for target = Σ μᵢ lgᵢᵀ.
    let n = free.len();
    let mut mu = [0.0; 3];
    if n > 0 {
        let mut g = nalgebra::DMatrix::<f64>::zeros(3, n);
        for (c, row) in free.iter().enumerate() {
            g.set_column(c, &row.transpose());
        }
        let t = nalgebra::DVector::from_column_slice(target.as_slice());
        if let Ok(m) = g.clone().svd(true, true).solve(&t, 1e-12) {
            for c in 0..n {
                mu[c] = m[c];
                residual = residual
                    .max(free_bounds[c].0 - m[c])
                    .max(m[c] - free_bounds[c].1);
            }
        }
        let mut recon = Vector3::zeros();
        for c in 0..n {
            recon += free[c].transpose() * mu[c];
        }
        target -= recon;
    }
    residual.max(target.amax())
}
