//! Serves the bundled teleop scenario on the default address for a while
//! (seconds as the first argument, default 120), then prints the run summary.
//!
//! Try it with any WebSocket client, e.g.
//! `{"type":"cmd","vx":2.0,"vy":0,"vz":0,"yaw_rate":0}`.

use std::path::Path;
use std::time::Duration;

use cbf_shield::sim::ScenarioConfig;
use cbf_shield_teleop::{TeleopOptions, TeleopServer, DEFAULT_BIND};

#[tokio::main]
async fn main() {
    let seconds: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seconds"))
        .unwrap_or(120);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/teleop.json");
    let cfg = ScenarioConfig::load(&path, &[]).unwrap();
    let server = TeleopServer::spawn(cfg, TeleopOptions::default(), DEFAULT_BIND.parse().unwrap())
        .await
        .unwrap();
    println!("listening on {}", server.url());
    tokio::time::sleep(Duration::from_secs(seconds)).await;
    let run = server.recording().await.unwrap();
    println!("{}", serde_json::to_string_pretty(&run.summary).unwrap());
    server.shutdown().await;
}
