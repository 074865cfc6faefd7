//! Full QP with both field-of-view rows: a sideways setpoint is pulled back
//! toward the sensor cone. Backing away leaves the cone, so the soft rows push forward.

use cbf_shield::cbf::evaluate;
use cbf_shield::qp::{solve_constrained, FilterProblem};
use cbf_shield::{CbfParams, VehicleState};
use nalgebra::Vector3;

fn main() {
    let p = CbfParams::default();
    let points = [Vector3::new(1.2, 0.0, 0.0)];
    for (label, v, a_sp) in [
        (
            "creep forward",
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(0.5, 0.0, 0.0),
        ),
        (
            "strafe left",
            Vector3::new(0.2, 0.8, 0.0),
            Vector3::new(0.0, 3.0, 0.0),
        ),
        (
            "ram the point",
            Vector3::new(1.5, 0.0, 0.0),
            Vector3::new(4.0, 0.0, 0.0),
        ),
        (
            "back away",
            Vector3::new(-0.5, 0.0, 0.0),
            Vector3::new(-2.0, 0.0, 0.0),
        ),
    ] {
        let state = VehicleState::new(Vector3::zeros(), v, 0.0);
        let eval = evaluate(&points, &state, &p);
        let problem = FilterProblem::from_evaluation(a_sp, &eval, &p, true).unwrap();
        let s = solve_constrained(&problem).unwrap();
        println!(
            "{label:15} a* = [{:6.3}, {:6.3}, {:6.3}]  slacks = [{:.3}, {:.3}]  active {:03b}  iters {}",
            s.a_star.x, s.a_star.y, s.a_star.z, s.slacks[0], s.slacks[1], s.active_set, s.iterations
        );
    }
}
