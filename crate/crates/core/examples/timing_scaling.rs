//! Kernel cost versus obstacle count, printed as CSV plus the linear fit.

use cbf_shield::bench::{run_bench, BenchConfig};

fn main() {
    let report = run_bench(&BenchConfig::default());
    report.write_csv(std::io::stdout()).unwrap();
    if let Some(fit) = report.fit {
        println!(
            "# slope {:.1} ns/point, intercept {:.0} ns, R² {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    if let Some(r) = report.ratio(25, 200) {
        println!("# t(200)/t(25) = {r:.2}");
    }
}
