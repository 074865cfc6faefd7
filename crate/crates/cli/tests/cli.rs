use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cbf-shield"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

fn run(name: &str, out: &Path, sets: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg("run")
        .arg("--config")
        .arg(scenario(name))
        .arg("--out")
        .arg(out);
    for s in sets {
        cmd.args(["--set", s]);
    }
    cmd.output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn adversarial_run_exits_zero_and_keeps_its_distance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("adversarial.json", dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path());
    assert!(s["min_distance"].as_f64().unwrap() >= 0.65);
    for f in ["run.csv", "config.json", "obstacles.bin"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }

    let replayed = bin()
        .args(["replay", "--log"])
        .arg(dir.path().join("run.csv"))
        .output()
        .unwrap();
    assert_eq!(replayed.status.code(), Some(0));
    let text = String::from_utf8(replayed.stdout).unwrap();
    assert!(text.contains("divergent rows: 0"), "{text}");

    let tuned = bin()
        .args(["replay", "--set", "cbf_params.kappa=35", "--log"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(tuned.status.code(), Some(3));
    assert!(String::from_utf8(tuned.stdout)
        .unwrap()
        .contains("parameter-induced"));
}

#[test]
fn ellipse_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("ellipse_panel.json", dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(summary(dir.path())["peak_speed"].as_f64().unwrap() > 2.5);
}

#[test]
fn negative_epsilon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "adversarial.json",
        dir.path(),
        &["cbf_params.epsilon=-1", "cbf_params.alpha=0"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("epsilon") && err.contains("> 0"), "{err}");
    assert!(
        err.contains("alpha"),
        "every violated bound is listed: {err}"
    );
    assert!(!dir.path().join("run.csv").exists());
}

#[test]
fn unfiltered_adversarial_run_collides() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("adversarial.json", dir.path(), &["filter.enabled=false"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(summary(dir.path())["collision_time"].is_number());
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("nope.json", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_prints_csv() {
    let out = bin()
        .args(["bench", "--n", "0,25,200", "--reps", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "{csv}");
    assert!(lines[0].starts_with("n,"));
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn serve_reports_its_address_and_rejects_a_taken_port() {
    let mut first = bin()
        .args(["serve", "--bind", "127.0.0.1:0", "--config"])
        .arg(scenario("teleop.json"))
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(first.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("ws://")
        .and_then(|s| s.strip_suffix("/ws"))
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();

    let second = bin()
        .args(["serve", "--bind", &addr, "--config"])
        .arg(scenario("teleop.json"))
        .output()
        .unwrap();
    first.kill().unwrap();
    first.wait().unwrap();
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8(second.stderr).unwrap().contains(&addr));
}

#[test]
fn serve_needs_an_external_reference() {
    let out = bin()
        .args(["serve", "--bind", "127.0.0.1:0", "--config"])
        .arg(scenario("adversarial.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("external"));
}
