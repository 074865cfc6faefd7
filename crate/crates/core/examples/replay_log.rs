//! Records a run, replays it, then replays it again under a different κ.

use std::path::Path;

use cbf_shield::commands::replay_log;
use cbf_shield::replay::write_run_dir;
use cbf_shield::sim::{run_scenario, ScenarioConfig};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/adversarial.json");
    let cfg = ScenarioConfig::load(&path, &["duration=9".into()]).unwrap();
    let dir = std::env::temp_dir().join("cbf-shield-replay-example");
    write_run_dir(&dir, &run_scenario(&cfg).unwrap()).unwrap();

    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    println!("== same parameters");
    let code = replay_log(&dir, &[], &mut out, &mut err);
    println!("exit {code}\n== kappa = 35");
    let code = replay_log(&dir, &["cbf_params.kappa=35".into()], &mut out, &mut err);
    println!("exit {code}");
}
