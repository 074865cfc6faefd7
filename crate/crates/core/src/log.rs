//! Per-step run logs (CSV with `#` metadata lines) and their summaries.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("missing header line `# {0}: ...`")]
    MissingHeader(&'static str),
}

pub const COLUMNS: [&str; 34] = [
    "t",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "yaw",
    "a_sp_x",
    "a_sp_y",
    "a_sp_z",
    "a_star_x",
    "a_star_y",
    "a_star_z",
    "a_act_x",
    "a_act_y",
    "a_act_z",
    "h",
    "h_f1",
    "h_f2",
    "eta",
    "active_set",
    "delta1",
    "delta2",
    "n_obstacles",
    "distance",
    "tracking_error",
    "filter_enabled",
    "step_compute_ns",
    "lf_h",
    "lg_h_x",
    "lg_h_y",
    "lg_h_z",
    "path",
];

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub yaw: f64,
    pub a_sp: Vector3<f64>,
    pub a_star: Vector3<f64>,
    pub a_actual: Vector3<f64>,
    pub h: Option<f64>,
    pub h_f: [f64; 2],
    pub eta: Option<f64>,
    pub active_set: u8,
    pub slacks: [f64; 2],
    pub n_obstacles: usize,
    /// Signed distance to the nearest active surface (`inf` in free space).
    pub distance: f64,
    pub tracking_error: Option<f64>,
    pub filter_enabled: bool,
    pub compute_ns: u64,
    pub lf_h: Option<f64>,
    pub lg_h: Option<Vector3<f64>>,
    /// Solver path tag: bypass, pass, analytic, qp or fallback.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub rows: Vec<LogRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f(s: &str, row: usize) -> Result<f64, LogError> {
    s.parse().map_err(|_| LogError::Parse {
        row,
        msg: format!("bad number `{s}`"),
    })
}

fn parse_opt(s: &str, row: usize) -> Result<Option<f64>, LogError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f(s, row).map(Some)
    }
}

impl LogRow {
    fn record(&self) -> Vec<String> {
        let v = |x: &Vector3<f64>| [x.x.to_string(), x.y.to_string(), x.z.to_string()];
        let mut r = vec![self.t.to_string()];
        r.extend(v(&self.position));
        r.extend(v(&self.velocity));
        r.push(self.yaw.to_string());
        r.extend(v(&self.a_sp));
        r.extend(v(&self.a_star));
        r.extend(v(&self.a_actual));
        r.push(opt(self.h));
        r.push(self.h_f[0].to_string());
        r.push(self.h_f[1].to_string());
        r.push(opt(self.eta));
        r.push(self.active_set.to_string());
        r.push(self.slacks[0].to_string());
        r.push(self.slacks[1].to_string());
        r.push(self.n_obstacles.to_string());
        r.push(self.distance.to_string());
        r.push(opt(self.tracking_error));
        r.push(u8::from(self.filter_enabled).to_string());
        r.push(self.compute_ns.to_string());
        r.push(opt(self.lf_h));
        match &self.lg_h {
            Some(g) => r.extend(v(g)),
            None => r.extend([String::new(), String::new(), String::new()]),
        }
        r.push(self.path.clone());
        r
    }

    fn parse(rec: &csv::StringRecord, row: usize) -> Result<Self, LogError> {
        if rec.len() != COLUMNS.len() {
            return Err(LogError::Parse {
                row,
                msg: format!("expected {} fields, got {}", COLUMNS.len(), rec.len()),
            });
        }
        let f = |i: usize| parse_f(&rec[i], row);
        let v = |i: usize| -> Result<Vector3<f64>, LogError> {
            Ok(Vector3::new(f(i)?, f(i + 1)?, f(i + 2)?))
        };
        let int = |i: usize| -> Result<u64, LogError> {
            rec[i].parse().map_err(|_| LogError::Parse {
                row,
                msg: format!("bad integer `{}`", &rec[i]),
            })
        };
        let lg_h = if rec[30].is_empty() {
            None
        } else {
            Some(v(30)?)
        };
        Ok(Self {
            t: f(0)?,
            position: v(1)?,
            velocity: v(4)?,
            yaw: f(7)?,
            a_sp: v(8)?,
            a_star: v(11)?,
            a_actual: v(14)?,
            h: parse_opt(&rec[17], row)?,
            h_f: [f(18)?, f(19)?],
            eta: parse_opt(&rec[20], row)?,
            active_set: int(21)? as u8,
            slacks: [f(22)?, f(23)?],
            n_obstacles: int(24)? as usize,
            distance: f(25)?,
            tracking_error: parse_opt(&rec[26], row)?,
            filter_enabled: int(27)? != 0,
            compute_ns: int(28)?,
            lf_h: parse_opt(&rec[29], row)?,
            lg_h,
            path: rec[33].to_string(),
        })
    }
}

impl RunLog {
    pub fn write<W: Write>(&self, mut out: W) -> Result<(), LogError> {
        writeln!(out, "# config_hash: {}", self.header.config_hash)?;
        writeln!(out, "# code_version: {}", self.header.code_version)?;
        writeln!(out, "# seed: {}", self.header.seed)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut meta = Vec::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(m) if body.is_empty() => meta.push(m.trim().to_string()),
                _ => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let get = |key: &'static str| {
            meta.iter()
                .find_map(|m| {
                    m.strip_prefix(key)
                        .and_then(|r| r.strip_prefix(':'))
                        .map(|r| r.trim().to_string())
                })
                .ok_or(LogError::MissingHeader(key))
        };
        let header = RunHeader {
            config_hash: get("config_hash")?,
            code_version: get("code_version")?,
            seed: get("seed")?.parse().map_err(|_| LogError::Parse {
                row: 0,
                msg: "bad seed".into(),
            })?,
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let rows = rdr
            .records()
            .enumerate()
            .map(|(i, rec)| LogRow::parse(&rec?, i))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    pub fn summary(&self, dt: f64) -> RunSummary {
        let n = self.rows.len();
        let mut s = RunSummary {
            config_hash: self.header.config_hash.clone(),
            steps: n,
            duration: n as f64 * dt,
            min_distance: f64::INFINITY,
            min_h: None,
            time_h_negative: 0.0,
            longest_h_negative: 0.0,
            filter_activity_ratio: 0.0,
            peak_speed: 0.0,
            peak_acceleration: 0.0,
            mean_compute_ns: 0.0,
            max_compute_ns: 0,
            collision_time: None,
        };
        let (mut run, mut active, mut compute) = (0.0, 0usize, 0u128);
        for r in &self.rows {
            s.min_distance = s.min_distance.min(r.distance);
            if let Some(h) = r.h {
                s.min_h = Some(s.min_h.map_or(h, |m: f64| m.min(h)));
            }
            if r.h.is_some_and(|h| h < 0.0) {
                s.time_h_negative += dt;
                run += dt;
                s.longest_h_negative = s.longest_h_negative.max(run);
            } else {
                run = 0.0;
            }
            active += usize::from(r.active_set != 0);
            s.peak_speed = s.peak_speed.max(r.velocity.norm());
            s.peak_acceleration = s.peak_acceleration.max(r.a_actual.norm());
            compute += r.compute_ns as u128;
            s.max_compute_ns = s.max_compute_ns.max(r.compute_ns);
        }
        if n > 0 {
            s.filter_activity_ratio = active as f64 / n as f64;
            s.mean_compute_ns = compute as f64 / n as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub steps: usize,
    pub duration: f64,
    pub min_distance: f64,
    pub min_h: Option<f64>,
    pub time_h_negative: f64,
    pub longest_h_negative: f64,
    /// Fraction of steps where at least one constraint was active.
    pub filter_activity_ratio: f64,
    pub peak_speed: f64,
    pub peak_acceleration: f64,
    pub mean_compute_ns: f64,
    pub max_compute_ns: u64,
    pub collision_time: Option<f64>,
}
