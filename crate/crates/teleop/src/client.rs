//! Headless client that drives the service over the WebSocket path.

use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use cbf_shield::log::{LogError, RunLog};

use crate::protocol::{ClientMessage, Hello, ServerMessage, StateSnapshot};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("unexpected frame: {0}")]
    Protocol(String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Log(#[from] LogError),
}

/// A message sent once the simulated time reaches `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedMessage {
    pub t: f64,
    pub message: ClientMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    /// Sorted by `t`.
    pub messages: Vec<TimedMessage>,
    /// The run is collected once a snapshot at or after this time arrives.
    pub duration: f64,
    /// The last velocity command is repeated this often, as a joystick would.
    pub resend: Duration,
    pub timeout: Duration,
}

impl Script {
    pub fn new(duration: f64) -> Self {
        Self {
            messages: Vec::new(),
            duration,
            resend: Duration::from_millis(50),
            timeout: Duration::from_secs(60),
        }
    }

    pub fn at(mut self, t: f64, message: ClientMessage) -> Self {
        self.messages.push(TimedMessage { t, message });
        self.messages.sort_by(|a, b| a.t.total_cmp(&b.t));
        self
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub hello: Hello,
    pub snapshots: Vec<StateSnapshot>,
    pub errors: Vec<String>,
    pub log: RunLog,
}

fn text(msg: &ClientMessage) -> Message {
    Message::Text(
        serde_json::to_string(msg)
            .expect("client messages serialize")
            .into(),
    )
}

fn parse(msg: Message) -> Result<Option<ServerMessage>, ClientError> {
    match msg {
        Message::Text(t) => serde_json::from_str(t.as_str())
            .map(Some)
            .map_err(|e| ClientError::Protocol(format!("{e}: {t}"))),
        Message::Close(_) => Err(ClientError::Closed),
        _ => Ok(None),
    }
}

async fn next<S>(
    stream: &mut S,
    deadline: Instant,
    timeout: Duration,
) -> Result<Option<ServerMessage>, ClientError>
where
    S: futures_util::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    let remaining = deadline.saturating_duration_since(Instant::now());
    match tokio::time::timeout(remaining, stream.next()).await {
        Err(_) => Err(ClientError::Timeout(timeout)),
        Ok(None) => Err(ClientError::Closed),
        Ok(Some(m)) => parse(m?),
    }
}

/// Connects to `url`, plays `script` against the simulated clock and returns
/// the recorded run fetched from the service.
pub async fn run_script(url: &str, script: &Script) -> Result<ScriptRun, ClientError> {
    let deadline = Instant::now() + script.timeout;
    let (ws, _) = tokio_tungstenite::connect_async(url).await?;
    let (mut sink, mut stream) = ws.split();

    let hello = match next(&mut stream, deadline, script.timeout).await? {
        Some(ServerMessage::Hello(h)) => h,
        other => {
            return Err(ClientError::Protocol(format!(
                "expected hello, got {other:?}"
            )))
        }
    };

    let mut snapshots = Vec::new();
    let mut errors = Vec::new();
    let mut pending = script.messages.iter().peekable();
    let mut last_cmd: Option<ClientMessage> = None;
    let mut last_send = Instant::now();
    let mut t = 0.0;
    loop {
        while let Some(m) = pending.next_if(|m| m.t <= t) {
            sink.send(text(&m.message)).await?;
            if matches!(m.message, ClientMessage::Cmd(_)) {
                last_cmd = Some(m.message.clone());
                last_send = Instant::now();
            }
        }
        if let Some(cmd) = &last_cmd {
            if last_send.elapsed() >= script.resend {
                sink.send(text(cmd)).await?;
                last_send = Instant::now();
            }
        }
        if pending.peek().is_none() && t >= script.duration {
            break;
        }
        match next(&mut stream, deadline, script.timeout).await? {
            Some(ServerMessage::State(s)) => {
                t = s.t;
                snapshots.push(s);
            }
            Some(ServerMessage::Error { message }) => errors.push(message),
            Some(other) => {
                return Err(ClientError::Protocol(format!("unexpected {other:?}")));
            }
            None => {}
        }
    }

    sink.send(text(&ClientMessage::Control(
        crate::protocol::ControlAction::Log,
    )))
    .await?;
    let csv = loop {
        match next(&mut stream, deadline, script.timeout).await? {
            Some(ServerMessage::Log { csv }) => break csv,
            Some(ServerMessage::State(s)) => snapshots.push(s),
            Some(ServerMessage::Error { message }) => errors.push(message),
            _ => {}
        }
    };
    let _ = sink.send(Message::Close(None)).await;
    let log = RunLog::read(std::io::BufReader::new(csv.as_bytes()))?;
    Ok(ScriptRun {
        hello,
        snapshots,
        errors,
        log,
    })
}
