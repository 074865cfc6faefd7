use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use cbf_shield::sim::{RunOutcome, ScenarioConfig};

use crate::protocol::{
    ClientMessage, ControlAction, Hello, ServerMessage, StateSnapshot, VelocityCommand,
};
use crate::session::{Session, SessionError, TeleopOptions};

pub const DEFAULT_BIND: &str = "127.0.0.1:8787";
const COMMAND_QUEUE: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("the simulation task has stopped")]
    Stopped,
}

type Reply = oneshot::Sender<Result<Option<ServerMessage>, String>>;

enum SimRequest {
    Command {
        cmd: VelocityCommand,
        received_step: u64,
    },
    Control {
        action: ControlAction,
        reply: Reply,
    },
    Hello {
        controller: bool,
        reply: oneshot::Sender<Hello>,
    },
    Recording(oneshot::Sender<RunOutcome>),
}

#[derive(Clone)]
struct AppState {
    requests: mpsc::Sender<SimRequest>,
    snapshots: watch::Receiver<StateSnapshot>,
    steps: watch::Receiver<u64>,
    controller: Arc<Mutex<Option<u64>>>,
    next_id: Arc<AtomicU64>,
    snapshot_period: Duration,
    shutdown: watch::Receiver<bool>,
}

/// A running service. Dropping it without [`TeleopServer::shutdown`] leaves the tasks running.
pub struct TeleopServer {
    addr: SocketAddr,
    requests: mpsc::Sender<SimRequest>,
    shutdown: watch::Sender<bool>,
    sim_task: JoinHandle<()>,
    http_task: JoinHandle<()>,
}

impl TeleopServer {
    /// Binds `addr` and starts the simulation and connection tasks.
    pub async fn spawn(
        config: ScenarioConfig,
        opts: TeleopOptions,
        addr: SocketAddr,
    ) -> Result<Self, TeleopError> {
        let session = Session::new(config, opts)?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| TeleopError::Bind { addr, source })?;
        let addr = listener
            .local_addr()
            .map_err(|source| TeleopError::Bind { addr, source })?;

        let (req_tx, req_rx) = mpsc::channel(COMMAND_QUEUE);
        let (snap_tx, snap_rx) = watch::channel(session.snapshot());
        let (step_tx, step_rx) = watch::channel(0u64);
        let (stop_tx, stop_rx) = watch::channel(false);
        let sim_task = tokio::spawn(sim_loop(session, req_rx, snap_tx, step_tx, stop_rx.clone()));

        let state = AppState {
            requests: req_tx.clone(),
            snapshots: snap_rx,
            steps: step_rx,
            controller: Arc::new(Mutex::new(None)),
            next_id: Arc::new(AtomicU64::new(0)),
            snapshot_period: Duration::from_secs_f64(1.0 / opts.snapshot_hz.max(1.0)),
            shutdown: stop_rx.clone(),
        };
        let app = Router::new()
            .route("/", get(upgrade))
            .route("/ws", get(upgrade))
            .with_state(state);
        let mut stop = stop_rx;
        let http_task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = stop.wait_for(|s| *s).await;
                })
                .await;
        });
        log::info!("teleop service listening on ws://{addr}");
        Ok(Self {
            addr,
            requests: req_tx,
            shutdown: stop_tx,
            sim_task,
            http_task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// The run recorded since the last reset.
    pub async fn recording(&self) -> Result<RunOutcome, TeleopError> {
        let (tx, rx) = oneshot::channel();
        self.requests
            .send(SimRequest::Recording(tx))
            .await
            .map_err(|_| TeleopError::Stopped)?;
        rx.await.map_err(|_| TeleopError::Stopped)
    }

    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.sim_task.await;
        let _ = self.http_task.await;
    }
}

/// Fixed-rate loop and sole owner of the session. Never awaits anything but its own timer.
async fn sim_loop(
    mut session: Session,
    mut requests: mpsc::Receiver<SimRequest>,
    snapshots: watch::Sender<StateSnapshot>,
    steps: watch::Sender<u64>,
    shutdown: watch::Receiver<bool>,
) {
    let dt = session.config().dt / session.options().time_scale.max(1e-3);
    let mut timer = tokio::time::interval(Duration::from_secs_f64(dt));
    timer.set_missed_tick_behavior(MissedTickBehavior::Burst);
    loop {
        timer.tick().await;
        if *shutdown.borrow() {
            break;
        }
        while let Ok(req) = requests.try_recv() {
            match req {
                SimRequest::Command { cmd, received_step } => session.command(cmd, received_step),
                SimRequest::Control { action, reply } => {
                    let _ = reply.send(session.control(action));
                }
                SimRequest::Hello { controller, reply } => {
                    let _ = reply.send(session.hello(controller));
                }
                SimRequest::Recording(reply) => {
                    let _ = reply.send(session.recording());
                }
            }
        }
        session.tick();
        steps.send_replace(session.step_index());
        snapshots.send_replace(session.snapshot());
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

fn frame(msg: &ServerMessage) -> Message {
    Message::Text(
        serde_json::to_string(msg)
            .expect("server messages serialize")
            .into(),
    )
}

fn error_frame(message: impl Into<String>) -> Message {
    frame(&ServerMessage::Error {
        message: message.into(),
    })
}

async fn connection(socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let controller = {
        let mut slot = state.controller.lock().expect("controller slot");
        if slot.is_none() {
            *slot = Some(id);
        }
        *slot == Some(id)
    };
    let (mut sink, mut stream) = socket.split();

    let (tx, rx) = oneshot::channel();
    if state
        .requests
        .send(SimRequest::Hello {
            controller,
            reply: tx,
        })
        .await
        .is_err()
    {
        return;
    }
    let Ok(hello) = rx.await else { return };
    if sink
        .send(frame(&ServerMessage::Hello(hello)))
        .await
        .is_err()
    {
        release(&state, id);
        return;
    }

    let mut stop = state.shutdown.clone();
    let mut ticker = tokio::time::interval(state.snapshot_period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let snap = state.snapshots.borrow().clone();
                if sink.send(frame(&ServerMessage::State(snap))).await.is_err() {
                    break;
                }
            }
            incoming = stream.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(Message::Binary(_))) => {
                        if sink.send(error_frame("binary frames are not supported")).await.is_err() {
                            break;
                        }
                        continue;
                    }
                    Some(Ok(_)) => continue,
                };
                let reply = handle_text(&state, controller, text.as_str()).await;
                if let Some(msg) = reply {
                    if sink.send(msg).await.is_err() {
                        break;
                    }
                }
            }
            _ = stop.changed() => break,
        }
    }
    release(&state, id);
}

fn release(state: &AppState, id: u64) {
    let mut slot = state.controller.lock().expect("controller slot");
    if *slot == Some(id) {
        *slot = None;
    }
}

async fn handle_text(state: &AppState, controller: bool, text: &str) -> Option<Message> {
    let msg: ClientMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return Some(error_frame(format!("malformed message: {e}"))),
    };
    let read_only = || {
        Some(error_frame(
            "read-only client: another client is in control",
        ))
    };
    match msg {
        ClientMessage::Cmd(cmd) => {
            if !controller {
                return read_only();
            }
            let finite = [cmd.vx, cmd.vy, cmd.vz, cmd.yaw_rate]
                .iter()
                .all(|x| x.is_finite());
            if !finite {
                return Some(error_frame("command values must be finite"));
            }
            let received_step = *state.steps.borrow();
            state
                .requests
                .send(SimRequest::Command { cmd, received_step })
                .await
                .err()
                .map(|_| error_frame("simulation stopped"))
        }
        ClientMessage::Control(action) => {
            if !controller && action != ControlAction::Log {
                return read_only();
            }
            let (tx, rx) = oneshot::channel();
            if state
                .requests
                .send(SimRequest::Control { action, reply: tx })
                .await
                .is_err()
            {
                return Some(error_frame("simulation stopped"));
            }
            match rx.await {
                Ok(Ok(reply)) => reply.map(|m| frame(&m)),
                Ok(Err(e)) => Some(error_frame(e)),
                Err(_) => Some(error_frame("simulation stopped")),
            }
        }
    }
}
