//! Closed-form filter on a ramming setpoint as the vehicle closes on a point.

use cbf_shield::cbf::composite_cbf;
use cbf_shield::qp::solve_analytic;
use cbf_shield::CbfParams;
use nalgebra::Vector3;

fn main() {
    let p = CbfParams::default();
    let a_sp = Vector3::new(4.0, 0.0, 0.0);
    let v = Vector3::new(1.5, 0.0, 0.0);
    println!("  dist      h      eta   a*_x");
    for d in [4.0, 3.0, 2.0, 1.5, 1.0, 0.8] {
        let cbf = composite_cbf(&[Vector3::new(d, 0.0, 0.0)], &v, &p).unwrap();
        let s = solve_analytic(&a_sp, &cbf, &p);
        println!("{d:6.2} {:8.3} {:8.3} {:6.3}", cbf.h, s.eta, s.a_star.x);
    }
}
