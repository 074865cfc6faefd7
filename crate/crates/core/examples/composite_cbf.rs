//! Composite CBF of a small point cloud, and how κ tightens the soft-min.

use cbf_shield::cbf::{composite_cbf, nu1};
use cbf_shield::CbfParams;
use nalgebra::Vector3;

fn main() {
    let points = [
        Vector3::new(1.5, 0.2, 0.0),
        Vector3::new(1.6, -0.3, 0.1),
        Vector3::new(3.0, 1.0, 0.0),
    ];
    let v = Vector3::new(1.0, 0.0, 0.0);
    for kappa in [10.0, 35.0, 70.0, 100.0] {
        let p = CbfParams {
            kappa,
            ..CbfParams::default()
        };
        let c = composite_cbf(&points, &v, &p).unwrap();
        let hardest = points
            .iter()
            .map(|r| p.gamma * (nu1(r, &v, &p) / p.gamma).tanh())
            .fold(f64::INFINITY, f64::min);
        println!(
            "kappa {kappa:>5}: h = {:8.4} (min term {hardest:.4})  Lf h = {:8.4}  Lg h = [{:.3}, {:.3}, {:.3}]",
            c.h, c.lf_h, c.lg_h[0], c.lg_h[1], c.lg_h[2]
        );
    }
}
