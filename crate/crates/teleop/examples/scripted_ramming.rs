//! Headless operator: full stick at the hallway end wall, turn around and fly
//! back past the pillar column, all through the WebSocket at 4x real time.

use std::path::Path;

use cbf_shield::sim::ScenarioConfig;
use cbf_shield_teleop::protocol::{ClientMessage, VelocityCommand};
use cbf_shield_teleop::{run_script, Script, TeleopOptions, TeleopServer};

fn cmd(vx: f64, vy: f64, yaw_rate: f64) -> ClientMessage {
    ClientMessage::Cmd(VelocityCommand {
        vx,
        vy,
        yaw_rate,
        ..Default::default()
    })
}

#[tokio::main]
async fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/teleop.json");
    let cfg = ScenarioConfig::load(&path, &[]).unwrap();
    let opts = TeleopOptions {
        time_scale: 4.0,
        ..Default::default()
    };
    let server = TeleopServer::spawn(cfg, opts, "127.0.0.1:0".parse().unwrap())
        .await
        .unwrap();
    let script = Script::new(24.0)
        .at(0.0, cmd(3.0, 0.0, 0.0))
        .at(10.0, cmd(0.0, 0.0, std::f64::consts::PI / 2.0))
        .at(11.0, cmd(3.0, 0.0, 0.0))
        .at(14.0, cmd(0.0, 0.0, std::f64::consts::PI / 2.0))
        .at(15.0, cmd(3.0, 0.0, 0.0));
    let run = run_script(&server.url(), &script).await.unwrap();
    for s in run.snapshots.iter().step_by(15) {
        println!(
            "t {:5.2}  p ({:6.2}, {:6.2})  yaw {:5.2}  dist {:5.2}  h {:>8}",
            s.t,
            s.p[0],
            s.p[1],
            s.yaw,
            s.distance,
            s.h.map_or("-".into(), |h| format!("{h:.3}"))
        );
    }
    let min = run
        .log
        .rows
        .iter()
        .map(|r| r.distance)
        .fold(f64::INFINITY, f64::min);
    println!(
        "rows {}  min distance {min:.3} m  errors {:?}",
        run.log.rows.len(),
        run.errors
    );
    server.shutdown().await;
}
