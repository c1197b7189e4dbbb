use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qcoop::report::{parse_report, report_json};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qcoop"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], scenario_path: &Path, out: &Path) -> Output {
    bin().arg("run").arg("--scenario").arg(scenario_path).arg("--out").arg(out).args(args).output().unwrap()
}

#[test]
fn clean_session_exits_zero_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[], &scenario("qkd_clean.toml"), tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["qkd"]["qber"], 0.0);
    assert_eq!(v["qkd"]["keys_identical"], true);
    assert_eq!(v["seed"], 3);
    // defaults are echoed
    assert_eq!(v["scenario"]["qkd"]["qber_threshold"], 0.05);
    assert_eq!(v["scenario"]["spdc"]["detector_a"]["efficiency"], 0.35);
}

#[test]
fn eavesdropper_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[], &scenario("qkd_eve.toml"), tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["qkd"]["eve_detected"], true);
    assert_eq!(v["status"], "aborted");
}

#[test]
fn validation_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nexperiment = \"combined_robots\"\n[robots.link]\navailability = 1.2\n").unwrap();
    let out = run(&[], &bad, &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("availability"));

    std::fs::write(&bad, "experiment = \"interferometer\"\n").unwrap();
    let out = run(&[], &bad, &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    std::fs::write(&bad, "seed = 1\nexperiment = \"interferometer\"\nphotons = 5\n").unwrap();
    let out = run(&[], &bad, &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":3:") && err.contains("photons"), "{err}");
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run(&["--seed", "99"], &scenario("interferometer.toml"), &tmp.path().join("a"));
    assert!(a.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a/report.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 99);
    assert_eq!(v["scenario"]["seed"], 99);
}

#[test]
fn report_round_trips_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["robots.toml", "entanglement.toml", "blocked_arm.toml"] {
        let dir = tmp.path().join(name);
        let out = run(&[], &scenario(name), &dir);
        assert!(out.status.success());
        let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
        assert_eq!(report_json(&parse_report(&text).unwrap()).unwrap(), text, "{name}");
    }
}

#[test]
fn csv_format_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["--format", "csv"], &scenario("robots.toml"), tmp.path());
    assert!(out.status.success());
    let summary = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("key,value\n"));
    assert!(summary.contains("\nrobots.trigger.task_id,7\n"));
    let traj = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("tick,agent,x,y,z,command\n"));
    let events = std::fs::read_to_string(tmp.path().join("events.ndjson")).unwrap();
    for line in events.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["t", "stream", "type", "payload"] {
            assert!(v.get(key).is_some(), "{line}");
        }
    }
}

#[test]
fn sweep_writes_monotone_delta_column() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep", "--param", "delta", "--steps", "20", "--scenario"])
        .arg(scenario("interferometer.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    let deltas: Vec<f64> = rdr.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert_eq!(deltas.len(), 20);
    assert!(deltas.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn table1_and_selftest_succeed() {
    let t = bin().args(["table1", "--trials", "100000"]).output().unwrap();
    assert!(t.status.success());
    let stdout = String::from_utf8_lossy(&t.stdout);
    assert_eq!(stdout.lines().filter(|l| l.ends_with(" ok")).count(), 8, "{stdout}");
    let s = bin().arg("selftest").output().unwrap();
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stdout));
}
