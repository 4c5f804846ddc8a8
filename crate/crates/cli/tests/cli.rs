//! End-to-end runs of the `agewatch` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agewatch::heap::write_snapshot;
use agewatch::synth::{expected_candidates, generate, SynthSpec, CRITICAL_CLASS};

const CLOCK: &str = "2024-01-01T00:00:00Z";

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn agewatch(args: &[&str]) -> Output {
    agewatch_env(args, None)
}

fn agewatch_env(args: &[&str], config_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agewatch"));
    cmd.args(args).env_remove("AGEWATCH_CONFIG");
    if let Some(p) = config_env {
        cmd.env("AGEWATCH_CONFIG", p);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Copies the hand-built snapshots (without the expectations file).
fn handbuilt_dir(count: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = root().join("crates/core/tests/fixtures/handbuilt");
    for k in 0..count {
        let name = format!("snap_{k}.json");
        fs::copy(src.join(&name), dir.path().join(&name)).unwrap();
    }
    dir
}

fn read_list(path: &Path) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["process"], "system_server");
    serde_json::from_value(v["containers"].clone()).unwrap()
}

#[test]
fn analyze_writes_report_and_list() {
    let snaps = handbuilt_dir(3);
    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["analyze", "--snapshots", s(snaps.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("object_name,dominator_name,mean,standard_deviation,number,rejuvenate\n"));
    assert!(out.path().join("report.json").is_file());

    let expected: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(root().join("crates/core/tests/fixtures/handbuilt/expected.json")).unwrap(),
    )
    .unwrap();
    let want: Vec<String> = serde_json::from_value(expected["default"].clone()).unwrap();
    assert_eq!(read_list(&out.path().join("rejuvenation_list.json")), want);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",TRUE")).count(), want.len());
}

#[test]
fn analyze_rejects_short_series() {
    let snaps = handbuilt_dir(2);
    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["analyze", "--snapshots", s(snaps.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 3 required"), "{}", stderr(&o));
}

#[test]
fn analyze_reports_parse_position() {
    let snaps = handbuilt_dir(3);
    fs::write(snaps.path().join("snap_3.json"), "{\n  \"snapshot_id\": \"x\",\n  oops\n}\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["analyze", "--snapshots", s(snaps.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("snap_3.json:3:"), "{}", stderr(&o));
}

#[test]
fn analyze_synthetic_system_server() {
    let spec = SynthSpec::default();
    let snaps = tempfile::tempdir().unwrap();
    for snap in generate(&spec).snapshots() {
        write_snapshot(snap, snaps.path().join(format!("{}.json", snap.snapshot_id()))).unwrap();
    }

    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["analyze", "--snapshots", s(snaps.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("system_server: 12674 containers across 3 snapshots, 36 selected"));
    let mut got = read_list(&out.path().join("rejuvenation_list.json"));
    got.sort();
    let mut want = expected_candidates(&spec, false);
    want.sort();
    assert_eq!(got.len(), 36);
    assert_eq!(got, want);
    let rows = fs::read_to_string(out.path().join("report.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 12_674);

    let o = agewatch(&[
        "analyze",
        "--snapshots",
        s(snaps.path()),
        "--out",
        s(out.path()),
        "--blacklist",
        CRITICAL_CLASS,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_list(&out.path().join("rejuvenation_list.json")).len(), 30);
}

#[test]
fn config_comes_from_flag_then_env() {
    let snaps = handbuilt_dir(3);
    let out = tempfile::tempdir().unwrap();
    let strict = out.path().join("strict.toml");
    fs::write(&strict, "[candidacy]\nmin_snapshots = 4\n").unwrap();
    let args = ["analyze", "--snapshots", s(snaps.path()), "--out", s(out.path())];

    let o = agewatch_env(&args, Some(&strict));
    assert_eq!(o.status.code(), Some(2), "env config should apply");
    assert!(stderr(&o).contains("at least 4 required"));

    let defaults = root().join("config/agewatch.toml");
    let mut with_flag = args.to_vec();
    with_flag.extend(["--config", s(&defaults)]);
    let o = agewatch_env(&with_flag, Some(&strict));
    assert_eq!(o.status.code(), Some(0), "flag should win over env: {}", stderr(&o));

    // Flags override the file.
    let mut with_override = args.to_vec();
    with_override.extend(["--min-snapshots", "3"]);
    let o = agewatch_env(&with_override, Some(&strict));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    fs::write(&strict, "[candidacy]\nmin_snapshot = 4\n").unwrap();
    let o = agewatch_env(&args, Some(&strict));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("strict.toml"));
}

fn detect_csv(csv: &str) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("indicators.csv");
    fs::write(&input, csv).unwrap();
    let out = dir.path().join("out");
    let o = agewatch(&["detect", "--indicators", s(&input), "--out", s(&out)]);
    (o, dir)
}

#[test]
fn detect_flat_series_reports_nothing() {
    let mut csv = String::from("timestamp_s,indicator,value\n");
    for i in 0..200 {
        csv.push_str(&format!("{},launch_time:a,500\n", i * 60));
        csv.push_str(&format!("{},pss:system_server,80000000\n", i * 60));
    }
    let (o, dir) = detect_csv(&csv);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "no aging detected\n");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["aging_detected"], false);
    assert_eq!(fs::read_to_string(dir.path().join("out/events.jsonl")).unwrap(), "");
}

#[test]
fn detect_single_row_is_too_short_to_alert() {
    let (o, _dir) = detect_csv("timestamp_s,indicator,value\n0,launch_time:a,500\n");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "no aging detected\n");
}

#[test]
fn detect_malformed_csv_is_an_input_error() {
    let (o, _dir) = detect_csv("timestamp_s,indicator,value\n0,launch_time:a,500\nten,launch_time:a,510\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("indicators.csv: line 3"), "{}", stderr(&o));
    let (o, _dir) = detect_csv("time,name,value\n0,a,1\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn detect_drifting_launch_time_raises_alarm() {
    let input = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/drifting_indicators.csv");
    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["detect", "--indicators", s(&input), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let alarm = text.lines().find(|l| l.starts_with("alarm")).expect("an alarm line");
    // Frozen from the baseline run of the bundled spec with seed 1.
    assert!(alarm.starts_with("alarm    t=2340 confidence=very_high ttaf=4.66h ["), "{alarm}");
    assert!(alarm.contains("pss:system_server"));
    assert!(!text.contains("no aging detected"));
    let log = fs::read_to_string(out.path().join("events.jsonl")).unwrap();
    assert!(log.lines().any(|l| l.starts_with(r#"{"event":"alarm","t":2340.0"#)));
}

#[test]
fn drifting_fixture_is_the_simulated_baseline() {
    let out = tempfile::tempdir().unwrap();
    let spec = root().join("specs/experiments.toml");
    let o = agewatch(&["simulate", "--spec", s(&spec), "--seed", "1", "--out", s(out.path()), "--no-plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fresh = fs::read(out.path().join("EXP1/indicators.csv")).unwrap();
    let frozen = fs::read(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/drifting_indicators.csv")).unwrap();
    assert!(fresh == frozen, "simulator output drifted from the frozen fixture");
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_and_ordered() {
    let spec = root().join("specs/experiments.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = agewatch(&[
            "simulate",
            "--spec",
            s(&spec),
            "--seed",
            "1",
            "--out",
            s(dir.path()),
            "--fixed-clock",
            CLOCK,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let fa = files(a.path());
    assert!(fa == files(b.path()), "outputs differ between identical runs");
    for name in [
        "comparison.csv",
        "comparison.md",
        "manifest.json",
        "plots/launch_time.svg",
        "plots/ttaf.svg",
        "EXP1/indicators.csv",
        "EXP1/events.jsonl",
        "EXP1/run.json",
        "EXP5/snapshots/EXP5-000.json",
    ] {
        assert!(a.path().join(name).is_file(), "{name} missing");
    }
    let manifest = fs::read_to_string(a.path().join("manifest.json")).unwrap();
    assert!(manifest.contains(&format!("\"generated_at\": \"{CLOCK}\"")));

    let csv = fs::read_to_string(a.path().join("comparison.csv")).unwrap();
    let mean_ttaf = |exp: &str| -> f64 {
        let line = csv.lines().find(|l| l.starts_with(&format!("{exp},Average,"))).unwrap();
        line.rsplit(',').next().unwrap().parse().unwrap()
    };
    let mean_lt = |exp: &str| -> f64 {
        let line = csv.lines().find(|l| l.starts_with(&format!("{exp},Average,"))).unwrap();
        line.split(',').nth(8).unwrap().parse().unwrap()
    };
    let (t2, t3, t4, t5) = (mean_ttaf("EXP2"), mean_ttaf("EXP3"), mean_ttaf("EXP4"), mean_ttaf("EXP5"));
    assert!(0.0 < t2 && t2 <= t3 && t3 <= t4 && t4 <= t5, "{t2} {t3} {t4} {t5}");
    assert!(mean_lt("EXP5") > mean_lt("EXP4"));
}

#[test]
fn report_rebuilds_the_comparison() {
    let spec = root().join("specs/experiments.toml");
    let runs = tempfile::tempdir().unwrap();
    let o = agewatch(&["simulate", "--spec", s(&spec), "--seed", "3", "--out", s(runs.path()), "--fixed-clock", CLOCK]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tempfile::tempdir().unwrap();
    let o = agewatch(&["report", "--runs", s(runs.path()), "--out", s(out.path()), "--fixed-clock", CLOCK]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["comparison.csv", "comparison.md", "plots/launch_time.svg", "plots/ttaf.svg"] {
        assert_eq!(
            fs::read(runs.path().join(name)).unwrap(),
            fs::read(out.path().join(name)).unwrap(),
            "{name}"
        );
    }

    let empty = tempfile::tempdir().unwrap();
    let o = agewatch(&["report", "--runs", s(empty.path()), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_rejects_unknown_service() {
    let text = fs::read_to_string(root().join("specs/experiments.toml"))
        .unwrap()
        .replace(r#"rejuvenated_services = ["activity_manager"]"#, r#"rejuvenated_services = ["bluetooth"]"#);
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, text).unwrap();
    let o = agewatch(&["simulate", "--spec", s(&spec), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown service bluetooth"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(agewatch(&["analyze", "--snapshots", "x"]).status.code(), Some(2));
    assert_eq!(agewatch(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = agewatch(&["report", "--runs", s(dir.path()), "--out", s(dir.path()), "--fixed-clock", "yesterday"]);
    assert_eq!(o.status.code(), Some(2));
    let o = agewatch(&["analyze", "--snapshots", s(&dir.path().join("missing")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(agewatch(&["--help"]).status.code(), Some(0));
}
