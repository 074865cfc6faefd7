//! The `run`, `bench` and `replay` workflows behind the command-line tool,
//! written against plain writers so they can be tested in-process.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 collision,
//! 3 replay divergence.

use std::io::Write;
use std::path::Path;

use crate::bench::{run_bench, BenchConfig};
use crate::replay::{read_run_dir, replay, write_run_dir};
use crate::sim::{run_scenario, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_COLLISION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const MIN_R_SQUARED: f64 = 0.95;
const LISTED_DIVERGENT_ROWS: usize = 20;

/// Loads, validates and runs a scenario, writing the run directory to `out_dir`.
pub fn run(
    config: &Path,
    out_dir: &Path,
    overrides: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cfg = match ScenarioConfig::load(config, overrides) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    for advice in cfg.cbf_params.range_advice() {
        let _ = writeln!(err, "note: {advice}");
    }
    let outcome = match run_scenario(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    if let Err(e) = write_run_dir(out_dir, &outcome) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_ERROR;
    }
    let _ = writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
    );
    match outcome.collision {
        Some(c) => {
            let _ = writeln!(err, "{c}");
            EXIT_COLLISION
        }
        None => EXIT_OK,
    }
}

/// Prints the timing CSV to `out` and the fit to `err`.
pub fn bench(counts: &[usize], reps: usize, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let report = run_bench(&BenchConfig {
        counts: counts.to_vec(),
        repetitions: reps,
        ..Default::default()
    });
    if let Err(e) = report.write_csv(&mut *out) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_ERROR;
    }
    match report.fit {
        Some(fit) => {
            let _ = writeln!(
                err,
                "linear fit: {:.2} ns + {:.2} ns/obstacle, R² = {:.4}",
                fit.intercept, fit.slope, fit.r_squared
            );
            if fit.r_squared <= MIN_R_SQUARED {
                let _ = writeln!(
                    err,
                    "warning: R² = {:.4} is not above {MIN_R_SQUARED}, timing is not linear in n",
                    fit.r_squared
                );
            }
        }
        None => {
            let _ = writeln!(err, "linear fit needs at least two distinct counts");
        }
    }
    EXIT_OK
}

/// Re-evaluates a logged run and reports where it diverges.
pub fn replay_log(
    log: &Path,
    overrides: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let run = match read_run_dir(log, overrides) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let report = replay(&run.log, &run.config, &run.messages);
    if let Some((logged, current)) = &report.version_mismatch {
        let _ = writeln!(
            err,
            "warning: log written by version {logged}, replaying with {current}"
        );
    }
    let _ = writeln!(out, "rows: {}", report.rows);
    let _ = writeln!(out, "max |Δh|: {:e}", report.max_h_divergence);
    let _ = writeln!(out, "max |Δa*|: {:e}", report.max_a_star_divergence);
    let _ = writeln!(out, "divergent rows: {}", report.divergent.len());
    for d in report.divergent.iter().take(LISTED_DIVERGENT_ROWS) {
        let _ = writeln!(
            out,
            "  row {} t={:.2}: h logged {:?} replayed {:?}, |Δa*| {:e}",
            d.row, d.t, d.logged_h, d.replayed_h, d.a_star_diff
        );
    }
    if report.divergent.len() > LISTED_DIVERGENT_ROWS {
        let _ = writeln!(
            out,
            "  ... {} more",
            report.divergent.len() - LISTED_DIVERGENT_ROWS
        );
    }
    if report.parameter_induced {
        let _ = writeln!(
            out,
            "divergence is parameter-induced: the replay configuration differs from the logged one"
        );
    }
    if report.is_exact() {
        EXIT_OK
    } else {
        EXIT_DIVERGENCE
    }
}
