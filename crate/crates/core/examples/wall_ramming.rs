//! Drives straight at a wall with and without the filter.

use std::path::Path;

use cbf_shield::sim::{run_scenario, ScenarioConfig};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/adversarial.json");
    for filter in [true, false] {
        let cfg = ScenarioConfig::load(
            &path,
            &["duration=10".into(), format!("filter.enabled={filter}")],
        )
        .unwrap();
        let out = run_scenario(&cfg).unwrap();
        let s = &out.summary;
        println!(
            "filter {filter:5}: min distance {:.3} m, min h {:?}, peak speed {:.2} m/s, collision {:?}",
            s.min_distance,
            s.min_h.map(|h| (h * 1e3).round() / 1e3),
            s.peak_speed,
            out.collision.map(|c| c.t)
        );
    }
}
