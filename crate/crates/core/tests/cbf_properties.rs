use nalgebra::{Matrix3, RowVector3, Vector3};
use proptest::prelude::*;

use cbf_shield::cbf::{composite_cbf, evaluate, extended_class_k, nu1, ObstacleCbf};
use cbf_shield::qp::{
    solve_analytic, solve_constrained, ConstraintRow, FilterProblem, FilterSolution,
};
use cbf_shield::{CbfParams, VehicleState};

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(vec3(5.0), 1..=max)
}

fn params(kappa: f64, gamma: f64) -> CbfParams {
    CbfParams {
        kappa,
        gamma,
        ..CbfParams::default()
    }
}

fn close(a: &ObstacleCbf, b: &ObstacleCbf, tol: f64) -> bool {
    let rel = |x: f64, y: f64| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs()));
    rel(a.h, b.h) && rel(a.lf_h, b.lf_h) && (0..3).all(|i| rel(a.lg_h[i], b.lg_h[i]))
}

proptest! {
    #[test]
    fn permutation_invariance(
        pts in points(200),
        v in vec3(3.0),
        seed in any::<u64>(),
        kappa in 10.0..100.0f64,
    ) {
        let p = params(kappa, 40.0);
        let mut shuffled = pts.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = composite_cbf(&pts, &v, &p).unwrap();
        let b = composite_cbf(&shuffled, &v, &p).unwrap();
        prop_assert!(close(&a, &b, 1e-12), "{a:?} vs {b:?}");
    }

    #[test]
    fn h_is_non_decreasing_in_kappa(
        pts in points(200),
        v in vec3(3.0),
        k1 in 1.0..100.0f64,
        k2 in 1.0..100.0f64,
        gamma in 10.0..100.0f64,
    ) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let a = composite_cbf(&pts, &v, &params(lo, gamma)).unwrap().h;
        let b = composite_cbf(&pts, &v, &params(hi, gamma)).unwrap().h;
        prop_assert!(b >= a - 1e-12 * a.abs().max(1.0), "h({lo}) = {a} > h({hi}) = {b}");
    }

    #[test]
    fn single_point_is_the_saturated_first_layer(
        r in vec3(5.0),
        v in vec3(3.0),
        gamma in 10.0..100.0f64,
        kappa in 10.0..100.0f64,
    ) {
        let p = params(kappa, gamma);
        let h = composite_cbf(&[r], &v, &p).unwrap().h;
        let expected = gamma * (nu1(&r, &v, &p) / gamma).tanh();
        prop_assert!((h - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn class_k_is_increasing_and_sign_preserving(
        a in -1e3..1e3f64,
        b in -1e3..1e3f64,
        gain in 0.1..10.0f64,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(lo < hi);
        prop_assert!(extended_class_k(lo, gain) < extended_class_k(hi, gain));
        prop_assert_eq!(extended_class_k(a, gain).signum(), a.signum());
    }

    #[test]
    fn analytic_output_satisfies_the_row_and_ignores_isotropic_scale(
        pts in points(50),
        v in vec3(3.0),
        a_sp in vec3(10.0),
        c in 0.01..100.0f64,
    ) {
        let p = CbfParams::default();
        let cbf = composite_cbf(&pts, &v, &p).unwrap();
        let sol = solve_analytic(&a_sp, &cbf, &p);
        let row = ConstraintRow::obstacle(&cbf, p.alpha);
        prop_assert!(row.residual(&sol.a_star) >= -1e-8 * (1.0 + row.rhs.abs()));

        let mut scaled = p;
        scaled.weight = [[c, 0.0, 0.0], [0.0, c, 0.0], [0.0, 0.0, c]];
        prop_assert_eq!(solve_analytic(&a_sp, &cbf, &scaled), sol);

        // The isotropic QP with the obstacle row alone has the same minimiser.
        let problem = FilterProblem::new(
            a_sp, Some(row), [None, None], Matrix3::identity() * c, p.rho,
        ).unwrap();
        let qp = solve_constrained(&problem).unwrap();
        prop_assert!((qp.a_star - sol.a_star).norm() <= 1e-8 * (1.0 + sol.a_star.norm()));
    }

    #[test]
    fn removing_a_row_never_increases_the_cost(
        pts in points(50),
        v in vec3(3.0),
        yaw in -3.1..3.1f64,
        a_sp in vec3(10.0),
    ) {
        let p = CbfParams::default();
        let state = VehicleState::new(Vector3::zeros(), v, yaw);
        let eval = evaluate(&pts, &state, &p);
        let full = FilterProblem::from_evaluation(a_sp, &eval, &p, true).unwrap();
        let cost = |prob: &FilterProblem, s: &FilterSolution| prob.objective(&s.a_star, &s.slacks);
        let base = solve_constrained(&full).unwrap();
        prop_assert!(full.is_feasible(&base.a_star, 1e-8));
        let again = solve_constrained(&full).unwrap();
        prop_assert_eq!(again, base);
        for drop in 0..3 {
            let mut reduced = full.clone();
            match drop {
                0 => reduced.obstacle = None,
                j => reduced.fov[j - 1] = None,
            }
            let s = solve_constrained(&reduced).unwrap();
            let tol = 1e-9 * (1.0 + cost(&full, &base));
            prop_assert!(cost(&reduced, &s) <= cost(&full, &base) + tol, "dropping row {drop}");
        }

        // With only the hard row the cost is the plain weighted distance.
        let hard = FilterProblem { fov: [None, None], ..full.clone() };
        let free = FilterProblem { obstacle: None, ..hard };
        prop_assert_eq!(solve_constrained(&free).unwrap().a_star, a_sp);
    }
}

#[test]
fn worst_case_exponent_is_finite() {
    let p = params(100.0, 10.0);
    // Every point deep inside the avoidance radius while closing fast: tanh → −1.
    let v = Vector3::new(1e4, 0.0, 0.0);
    let pts: Vec<_> = (0..200)
        .map(|i| Vector3::new(0.05 + 1e-4 * i as f64, 0.0, 0.0))
        .collect();
    for p_i in &pts {
        assert_eq!((nu1(p_i, &v, &p) / p.gamma).tanh(), -1.0);
    }
    let c = composite_cbf(&pts, &v, &p).unwrap();
    assert!(c.h.is_finite() && c.lf_h.is_finite());
    assert!(c.lg_h.iter().all(|x| x.is_finite()));
    let expected = -p.gamma - (p.gamma / p.kappa) * 200f64.ln();
    assert!((c.h - expected).abs() < 1e-9, "{} vs {expected}", c.h);
}

#[test]
fn class_k_is_continuous_at_zero_on_both_sides() {
    for gain in [0.5, 2.0, 6.0] {
        let (l, r) = (extended_class_k(-1e-8, gain), extended_class_k(1e-8, gain));
        assert!((l + r).abs() < 1e-12 && r > 0.0);
        assert_eq!(extended_class_k(0.0, gain), 0.0);
    }
}

#[test]
fn zero_gradient_row_is_left_alone() {
    let p = CbfParams::default();
    let cbf = ObstacleCbf {
        h: 1.0,
        lf_h: 0.0,
        lg_h: RowVector3::zeros(),
    };
    let a_sp = Vector3::new(1.0, 2.0, 3.0);
    assert_eq!(solve_analytic(&a_sp, &cbf, &p).a_star, a_sp);
}
