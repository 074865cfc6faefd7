//! Run directories and offline re-evaluation of the filter over a logged run.
//!
//! A run directory holds `run.csv` (the [`RunLog`]), `config.json` (the
//! resolved scenario), `summary.json` and `obstacles.bin`, the obstacle
//! messages in the order they entered the queue, each prefixed by the
//! little-endian `u32` control step at which it was pushed.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::cbf::VehicleState;
use crate::log::{LogError, RunLog, RunSummary};
use crate::pipeline::{MessageError, ObstacleBuffer, ObstacleMessage, ObstacleQueue, SafetyFilter};
use crate::sim::{
    apply_overrides, ConfigError, RecordedMessage, RunOutcome, ScenarioConfig, CODE_VERSION,
};

pub const LOG_FILE: &str = "run.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MESSAGES_FILE: &str = "obstacles.bin";

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{MESSAGES_FILE} at byte {offset}: {source}")]
    Messages { offset: usize, source: MessageError },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReplayError + '_ {
    move |source| ReplayError::Io {
        path: path.into(),
        source,
    }
}

pub fn encode_messages(messages: &[RecordedMessage]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in messages {
        out.extend_from_slice(&m.step.to_le_bytes());
        m.message.encode_into(&mut out);
    }
    out
}

pub fn decode_messages(bytes: &[u8]) -> Result<Vec<RecordedMessage>, ReplayError> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let rest = &bytes[offset..];
        if rest.len() < 4 {
            return Err(ReplayError::Messages {
                offset,
                source: MessageError::Truncated {
                    need: 4,
                    have: rest.len(),
                },
            });
        }
        let step = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes"));
        let (message, used) = ObstacleMessage::decode(&rest[4..])
            .map_err(|source| ReplayError::Messages { offset, source })?;
        out.push(RecordedMessage { step, message });
        offset += 4 + used;
    }
    Ok(out)
}

/// Writes all four run files into `dir`, creating it if needed.
pub fn write_run_dir(dir: &Path, outcome: &RunOutcome) -> Result<(), ReplayError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(LOG_FILE);
    outcome
        .log
        .write(BufWriter::new(File::create(&path).map_err(io_err(&path))?))?;
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&outcome.config)? + "\n")
        .map_err(io_err(&path))?;
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&outcome.summary)? + "\n",
    )
    .map_err(io_err(&path))?;
    let path = dir.join(MESSAGES_FILE);
    std::fs::write(&path, encode_messages(&outcome.messages)).map_err(io_err(&path))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub log: RunLog,
    pub config: ScenarioConfig,
    pub messages: Vec<RecordedMessage>,
    pub summary: Option<RunSummary>,
}

/// Loads a run directory. `path` may also point at the log file inside it.
/// `overrides` are applied to the stored configuration before validation.
pub fn read_run_dir(path: &Path, overrides: &[String]) -> Result<RunDir, ReplayError> {
    let dir = if path.is_dir() {
        path
    } else {
        path.parent().unwrap_or(Path::new("."))
    };
    let log_path = if path.is_dir() {
        dir.join(LOG_FILE)
    } else {
        path.to_path_buf()
    };
    let log = RunLog::read(BufReader::new(
        File::open(&log_path).map_err(io_err(&log_path))?,
    ))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    apply_overrides(&mut doc, overrides)?;
    let config = ScenarioConfig::from_value(doc, dir)?;
    let msg_path = dir.join(MESSAGES_FILE);
    let messages = decode_messages(&std::fs::read(&msg_path).map_err(io_err(&msg_path))?)?;
    let summary = std::fs::read_to_string(dir.join(SUMMARY_FILE))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    Ok(RunDir {
        log,
        config,
        messages,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDivergence {
    pub row: usize,
    pub t: f64,
    pub logged_h: Option<f64>,
    pub replayed_h: Option<f64>,
    /// Infinite when exactly one side has no obstacle constraint.
    pub h_diff: f64,
    pub a_star_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub rows: usize,
    pub max_h_divergence: f64,
    pub max_a_star_divergence: f64,
    pub divergent: Vec<RowDivergence>,
    /// `(logged, current)` when the log was written by another code version.
    pub version_mismatch: Option<(String, String)>,
    /// The replay configuration differs from the logged one and the outputs
    /// diverge, so the divergence is explained by the parameter change.
    pub parameter_induced: bool,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.divergent.is_empty()
    }
}

fn h_diff(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (None, None) => 0.0,
        (Some(x), Some(y)) if x == y => 0.0,
        (Some(x), Some(y)) => (x - y).abs(),
        _ => f64::INFINITY,
    }
}

/// Re-runs the filter step for every logged state with the recorded obstacle
/// stream, reproducing queue and buffer behaviour, and compares `h` and `a*`.
pub fn replay(log: &RunLog, config: &ScenarioConfig, messages: &[RecordedMessage]) -> ReplayReport {
    let version_mismatch = (log.header.code_version != CODE_VERSION)
        .then(|| (log.header.code_version.clone(), CODE_VERSION.to_string()));
    if let Some((logged, current)) = &version_mismatch {
        log::warn!("log written by version {logged}, replaying with {current}");
    }

    let f = &config.filter;
    let mut filter = SafetyFilter::new(config.cbf_params, config.mode, f.fov_enabled);
    let mut queue = ObstacleQueue::new(f.queue_capacity);
    let mut buffer =
        ObstacleBuffer::new(f.buffer_capacity, config.sensor.max_range, f.max_point_age);
    let mut pending = messages.iter().peekable();
    let mut report = ReplayReport {
        rows: log.rows.len(),
        max_h_divergence: 0.0,
        max_a_star_divergence: 0.0,
        divergent: Vec::new(),
        version_mismatch,
        parameter_induced: false,
    };

    for (i, row) in log.rows.iter().enumerate() {
        while let Some(m) = pending.next_if(|m| m.step as usize <= i) {
            queue.push(m.message.clone());
        }
        buffer.ingest(&mut queue);
        filter.set_enabled(row.filter_enabled);
        let state = VehicleState::new(row.position, row.velocity, row.yaw);
        let out = filter.step(&state, &buffer, &row.a_sp, config.dt);

        let dh = h_diff(row.h, out.telemetry.h);
        let da = (row.a_star - out.a_star).amax();
        let da = if da.is_nan() { f64::INFINITY } else { da };
        report.max_h_divergence = report.max_h_divergence.max(dh);
        report.max_a_star_divergence = report.max_a_star_divergence.max(da);
        if dh > 0.0 || da > 0.0 {
            report.divergent.push(RowDivergence {
                row: i,
                t: row.t,
                logged_h: row.h,
                replayed_h: out.telemetry.h,
                h_diff: dh,
                a_star_diff: da,
            });
        }
    }
    report.parameter_induced =
        !report.divergent.is_empty() && config.hash() != log.header.config_hash;
    report
}

pub fn replay_dir(path: &Path, overrides: &[String]) -> Result<ReplayReport, ReplayError> {
    let run = read_run_dir(path, overrides)?;
    Ok(replay(&run.log, &run.config, &run.messages))
}
