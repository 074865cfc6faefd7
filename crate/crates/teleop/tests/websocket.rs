use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use nalgebra::Vector3;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use cbf_shield::log::LogRow;
use cbf_shield::replay::replay;
use cbf_shield::sim::{run_scenario, Reference, ScenarioConfig, VelocityWaypoint};
use cbf_shield_teleop::protocol::{
    ClientMessage, ControlAction, Hello, ServerMessage, StateSnapshot, VelocityCommand,
};
use cbf_shield_teleop::{run_script, Script, TeleopError, TeleopOptions, TeleopServer};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn teleop_config(overrides: &[&str]) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/teleop.json");
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::load(&path, &overrides).unwrap()
}

fn any_port() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

async fn spawn(opts: TeleopOptions) -> TeleopServer {
    TeleopServer::spawn(teleop_config(&[]), opts, any_port())
        .await
        .unwrap()
}

fn cmd(vx: f64, seq: Option<u64>) -> ClientMessage {
    ClientMessage::Cmd(VelocityCommand {
        vx,
        seq,
        ..Default::default()
    })
}

async fn connect(server: &TeleopServer) -> (Ws, Hello) {
    let (mut ws, _) = tokio_tungstenite::connect_async(server.url())
        .await
        .unwrap();
    match recv(&mut ws).await {
        ServerMessage::Hello(h) => (ws, h),
        other => panic!("expected hello, got {other:?}"),
    }
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::Text(serde_json::to_string(msg).unwrap().into()))
        .await
        .unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let m = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("frame within 10 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = m {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn next_state(ws: &mut Ws) -> StateSnapshot {
    loop {
        if let ServerMessage::State(s) = recv(ws).await {
            return s;
        }
    }
}

async fn next_error(ws: &mut Ws) -> String {
    loop {
        if let ServerMessage::Error { message } = recv(ws).await {
            return message;
        }
    }
}

/// Rows equal up to the wall-clock compute time.
fn same_row(a: &LogRow, b: &LogRow) -> bool {
    let mut b = b.clone();
    b.compute_ns = a.compute_ns;
    *a == b
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn hover_without_commands() {
    let server = spawn(TeleopOptions {
        time_scale: 5.0,
        ..Default::default()
    })
    .await;
    let run = run_script(&server.url(), &Script::new(2.0)).await.unwrap();
    assert!(run.hello.controller);
    assert!(run.errors.is_empty(), "{:?}", run.errors);
    assert!(run.log.rows.len() >= 200);
    for r in &run.log.rows {
        assert!(r.position.metric_distance(&Vector3::new(0.0, 0.0, 1.0)) < 1e-9);
    }
    server.shutdown().await;
}

/// Ramming the hallway end wall through the socket reproduces the offline run
/// with the same constant setpoint, and the recording replays exactly.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn ramming_matches_offline_run_and_replays() {
    let server = spawn(TeleopOptions {
        time_scale: 4.0,
        hold: 5.0,
        start_paused: true,
        ..Default::default()
    })
    .await;
    let script = Script::new(12.0)
        .at(0.0, cmd(2.0, None))
        .at(0.0, ClientMessage::Control(ControlAction::Start));
    let run = run_script(&server.url(), &script).await.unwrap();
    assert!(run.errors.is_empty(), "{:?}", run.errors);
    let rows = &run.log.rows;
    assert!(rows.len() >= 1200);
    assert!(run.snapshots.iter().all(|s| !s.collided));

    let min_distance = rows
        .iter()
        .map(|r| r.distance)
        .fold(f64::INFINITY, f64::min);
    assert!(min_distance >= 0.65, "min distance {min_distance}");
    let x_max = rows.iter().map(|r| r.position.x).fold(f64::MIN, f64::max);
    assert!(x_max > 14.0 && x_max < 16.0, "x_max {x_max}");

    let mut offline = teleop_config(&[&format!("duration={}", rows.len() as f64 * 0.01)]);
    offline.controller.reference = Reference::VelocitySchedule {
        waypoints: vec![VelocityWaypoint {
            t: 0.0,
            velocity: Vector3::new(2.0, 0.0, 0.0),
        }],
    };
    let reference = run_scenario(&offline).unwrap();
    assert_eq!(reference.log.rows.len(), rows.len());
    for (i, (a, b)) in reference.log.rows.iter().zip(rows).enumerate() {
        assert!(same_row(a, b), "row {i} differs:\n{a:?}\n{b:?}");
    }

    let recording = server.recording().await.unwrap();
    // The service keeps flying after the client fetched its log.
    assert!(recording.log.rows.len() >= rows.len());
    assert!(rows.iter().zip(&recording.log.rows).all(|(a, b)| a == b));
    let report = replay(&recording.log, &recording.config, &recording.messages);
    assert!(report.is_exact(), "{:?}", report.divergent.first());
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn disabled_filter_passes_the_setpoint_through() {
    let server = spawn(TeleopOptions {
        time_scale: 5.0,
        ..Default::default()
    })
    .await;
    let script = Script::new(2.0)
        .at(
            0.0,
            ClientMessage::Control(ControlAction::ToggleFilter { value: Some(false) }),
        )
        .at(0.0, cmd(1.0, None));
    let run = run_script(&server.url(), &script).await.unwrap();
    let off: Vec<_> = run.log.rows.iter().filter(|r| !r.filter_enabled).collect();
    assert!(off.len() >= 150);
    assert!(off.iter().all(|r| r.a_star == r.a_sp && r.path == "bypass"));
    assert!(!run.snapshots.last().unwrap().filter_enabled);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pause_freezes_and_reset_rewinds() {
    let server = spawn(TeleopOptions {
        time_scale: 5.0,
        snapshot_hz: 50.0,
        ..Default::default()
    })
    .await;
    let (mut ws, _) = connect(&server).await;
    send(&mut ws, &cmd(0.5, None)).await;
    while next_state(&mut ws).await.t < 0.5 {}

    send(&mut ws, &ClientMessage::Control(ControlAction::Pause)).await;
    let mut paused = next_state(&mut ws).await;
    while paused.running {
        paused = next_state(&mut ws).await;
    }
    tokio::time::sleep(Duration::from_millis(200)).await;
    let later = next_state(&mut ws).await;
    assert_eq!(later.step, paused.step);
    assert_eq!(later.p, paused.p);

    send(&mut ws, &ClientMessage::Control(ControlAction::Reset)).await;
    let mut s = next_state(&mut ws).await;
    while s.step != 0 {
        s = next_state(&mut ws).await;
    }
    assert_eq!(s.t, 0.0);
    assert_eq!(s.p, [0.0, 0.0, 1.0]);
    assert!(!s.running);

    send(&mut ws, &ClientMessage::Control(ControlAction::Start)).await;
    while next_state(&mut ws).await.step == 0 {}
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn command_reaches_the_controller_within_two_steps() {
    let server = spawn(TeleopOptions::default()).await;
    let (mut ws, _) = connect(&server).await;
    for seq in 1..=5u64 {
        send(&mut ws, &cmd(0.3, Some(seq))).await;
        let s = loop {
            let s = next_state(&mut ws).await;
            if s.cmd_seq == Some(seq) {
                break s;
            }
        };
        let latency = s.cmd_latency_steps.unwrap();
        assert!(latency <= 2, "seq {seq}: {latency} steps");
    }
    server.shutdown().await;
}

async fn snapshot_rate(seconds: f64) {
    let server = spawn(TeleopOptions::default()).await;
    let (mut ws, _) = connect(&server).await;
    let start = Instant::now();
    let mut frames = 0usize;
    while start.elapsed().as_secs_f64() < seconds {
        send(&mut ws, &cmd(0.0, None)).await;
        let m = tokio::time::timeout(Duration::from_secs(2), ws.next())
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        let Message::Text(t) = m else { continue };
        assert!(t.len() < 16 * 1024, "{} byte frame", t.len());
        if let ServerMessage::State(s) = serde_json::from_str(t.as_str()).unwrap() {
            assert!(s.points.len() <= 64);
            frames += 1;
        }
    }
    let rate = frames as f64 / start.elapsed().as_secs_f64();
    assert!(rate >= 20.0, "{rate:.1} Hz");
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshots_arrive_at_twenty_hz() {
    snapshot_rate(3.0).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
#[ignore = "runs for a minute"]
async fn snapshots_sustain_twenty_hz_for_a_minute() {
    snapshot_rate(60.0).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_frames_get_an_error_and_the_socket_stays_open() {
    let server = spawn(TeleopOptions::default()).await;
    let (mut ws, _) = connect(&server).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    assert!(next_error(&mut ws).await.contains("malformed"));
    ws.send(Message::Text(r#"{"type":"fly"}"#.into()))
        .await
        .unwrap();
    assert!(next_error(&mut ws).await.contains("malformed"));
    ws.send(Message::Binary(vec![1u8, 2, 3].into()))
        .await
        .unwrap();
    assert!(next_error(&mut ws).await.contains("binary"));
    send(
        &mut ws,
        &ClientMessage::Control(ControlAction::SetParam {
            key: "epsilon".into(),
            value: serde_json::json!(-1.0),
        }),
    )
    .await;
    assert!(next_error(&mut ws).await.contains("epsilon"));
    send(
        &mut ws,
        &ClientMessage::Control(ControlAction::SetParam {
            key: "warp".into(),
            value: serde_json::json!(1.0),
        }),
    )
    .await;
    assert!(next_error(&mut ws).await.contains("unknown parameter"));

    send(&mut ws, &cmd(1.0, Some(42))).await;
    while next_state(&mut ws).await.cmd_seq != Some(42) {}
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn parameters_can_be_changed_live() {
    let server = spawn(TeleopOptions::default()).await;
    let (mut ws, _) = connect(&server).await;
    send(
        &mut ws,
        &ClientMessage::Control(ControlAction::SetParam {
            key: "kappa".into(),
            value: serde_json::json!(35.0),
        }),
    )
    .await;
    // Control frames are handled in order, so the log reply follows the update.
    send(&mut ws, &ClientMessage::Control(ControlAction::Log)).await;
    while !matches!(recv(&mut ws).await, ServerMessage::Log { .. }) {}
    let (_, hello) = connect(&server).await;
    assert_eq!(hello.params.kappa, 35.0);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn occupied_port_is_reported() {
    let server = spawn(TeleopOptions::default()).await;
    let err = TeleopServer::spawn(
        teleop_config(&[]),
        TeleopOptions::default(),
        server.local_addr(),
    )
    .await
    .err()
    .expect("second bind fails");
    assert!(matches!(err, TeleopError::Bind { .. }), "{err}");
    assert!(err.to_string().contains(&server.local_addr().to_string()));
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn later_clients_observe_until_control_is_released() {
    let server = spawn(TeleopOptions::default()).await;
    let (mut first, hello) = connect(&server).await;
    assert!(hello.controller);
    let (mut second, hello) = connect(&server).await;
    assert!(!hello.controller);

    send(&mut second, &cmd(1.0, None)).await;
    assert!(next_error(&mut second).await.contains("read-only"));
    send(&mut second, &ClientMessage::Control(ControlAction::Reset)).await;
    assert!(next_error(&mut second).await.contains("read-only"));
    send(&mut second, &ClientMessage::Control(ControlAction::Log)).await;
    loop {
        if let ServerMessage::Log { csv } = recv(&mut second).await {
            assert!(csv.starts_with('#'));
            break;
        }
    }
    next_state(&mut second).await;

    first.close(None).await.unwrap();
    drop(first);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        let (_, hello) = connect(&server).await;
        if hello.controller {
            break;
        }
        assert!(Instant::now() < deadline, "control was never released");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    server.shutdown().await;
}
