//! Ellipse tracking with a panel dropped onto the path mid-run. Prints a
//! coarse trace around the insertion and writes the full run to `target/ellipse`.

use std::path::Path;

use cbf_shield::replay::write_run_dir;
use cbf_shield::sim::{run_scenario, ScenarioConfig};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/ellipse_panel.json");
    let cfg = ScenarioConfig::load(&path, &[]).unwrap();
    let out = run_scenario(&cfg).unwrap();
    for r in out
        .log
        .rows
        .iter()
        .step_by(50)
        .filter(|r| (19.0..27.0).contains(&r.t))
    {
        println!(
            "t {:5.2}  p ({:5.2}, {:5.2})  dist {:5.2}  h {:8.3}  tracking {:5.3}",
            r.t,
            r.position.x,
            r.position.y,
            r.distance,
            r.h.unwrap_or(f64::NAN),
            r.tracking_error.unwrap_or(f64::NAN)
        );
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/ellipse");
    write_run_dir(&dir, &out).unwrap();
    println!("{}", serde_json::to_string_pretty(&out.summary).unwrap());
}
