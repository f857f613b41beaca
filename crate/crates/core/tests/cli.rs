use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spincoulomb::io::{parse_trajectory_csv, TRAJECTORY_COLUMNS};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spincoulomb"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

const ELLIPSE: &[&str] = &[
    "--nr", "1", "--l", "2", "--j", "5/2", "--m", "1/2", "--alpha", "0.05", "--periods", "3", "--seed", "11",
];

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let (first, second) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut args = vec!["simulate", "--out", "a.csv"];
    args.extend_from_slice(ELLIPSE);
    assert_eq!(run(first.path(), &args).status.code(), Some(0));
    assert_eq!(run(second.path(), &args).status.code(), Some(0));

    let a = fs::read(first.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(second.path().join("a.csv")).unwrap());
    let meta_a = fs::read_to_string(first.path().join("a.csv.meta.json")).unwrap();
    assert_eq!(meta_a, fs::read_to_string(second.path().join("a.csv.meta.json")).unwrap());

    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# config: {")));
    let rows = parse_trajectory_csv(&text).unwrap();
    assert!(rows.len() > 10);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), rows.len());
    for (line, row) in data.iter().zip(&rows) {
        assert_eq!(line.split(',').count(), TRAJECTORY_COLUMNS.len());
        let again: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        assert_eq!(*line, again.join(","));
    }
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
    }

    let meta: serde_json::Value = serde_json::from_str(&meta_a).unwrap();
    assert_eq!(meta["predicted"]["ratio_exact"], "7/20");
}

#[test]
fn json_polyline_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--format", "json", "--out", "p.json"];
    args.extend_from_slice(ELLIPSE);
    assert_eq!(run(dir.path(), &args).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    let points = v["points"].as_array().unwrap();
    assert!(points.len() > 10);
    assert_eq!(points[0].as_array().unwrap().len(), 3);
    assert!(v["config"].is_object());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "# ellipse\nnr = 1\nl = 2\nj = 5/2\nalpha = 0.02\n").unwrap();
    let from_file = stdout_json(&run(dir.path(), &["analyze", "--config", "run.cfg"]));
    assert_eq!(from_file["config"]["params"]["alpha"], 0.02);
    let overridden = stdout_json(&run(dir.path(), &["analyze", "--config", "run.cfg", "--alpha", "0.03"]));
    assert_eq!(overridden["config"]["params"]["alpha"], 0.03);
    assert_eq!(overridden["ratio_exact"], "7/20");

    fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    assert_eq!(run(dir.path(), &["analyze", "--config", "bad.cfg"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["analyze", "--config", "missing.cfg"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &[]).status.code(), Some(2));
    assert_eq!(run(d, &["simulate", "--bogus"]).status.code(), Some(2));

    let invalid = run(d, &["analyze", "--l", "1", "--j", "5/2"]);
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("j_upper_bound"));
    assert_eq!(run(d, &["simulate", "--t-end", "0"]).status.code(), Some(2));
    assert_eq!(run(d, &["simulate", "--alpha", "-1"]).status.code(), Some(2));

    // attractive spin-orbit coupling this strong leaves no circular orbit
    let capture = run(
        d,
        &["simulate", "--nr", "0", "--l", "1", "--j", "0.5", "--m", "0.5", "--g", "2000", "--alpha", "0.05"],
    );
    assert_eq!(capture.status.code(), Some(3));
    assert!(!d.join("trajectory.csv").exists());
}

#[test]
fn spectrum_tables() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&run(dir.path(), &["spectrum", "--n-max", "3", "--alpha", "0.01", "--electron"]));
    let entries = v.as_array().unwrap();
    assert!(!entries.is_empty());
    let keys: Vec<(u64, u64)> = entries
        .iter()
        .map(|e| (e["n"].as_u64().unwrap(), e["qn"]["ell"].as_u64().unwrap()))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(entries.iter().all(|e| e["e_electron"].is_number()));

    let csv = run(dir.path(), &["spectrum", "--n-max", "2", "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("n,n_r,l,j")));
}

#[test]
fn circular_and_action_reports() {
    let dir = tempfile::tempdir().unwrap();
    let c = stdout_json(&run(dir.path(), &["circular", "--l", "1", "--j", "1/2", "--alpha", "0.01"]));
    let (r, rn) = (c["radius"].as_f64().unwrap(), c["radius_numerical"].as_f64().unwrap());
    assert!((r - rn).abs() < 5e-8);
    assert!(c["segment_width"].as_f64().unwrap() > 0.0);

    let a = stdout_json(&run(
        dir.path(),
        &["action", "--nr", "2", "--l", "1", "--s", "0", "--toggle-p4", "off", "--toggle-so", "off"],
    ));
    assert!((a["radial_action"].as_f64().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn negative_values_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let a = stdout_json(&run(dir.path(), &["action", "--nr", "1", "--l", "1", "--alpha", "0.01", "--energy", "-1.3e-5"]));
    assert!(a["radial_action"].as_f64().unwrap() > 0.0);
    let out = run(dir.path(), &["analyze", "--nr", "1", "--l", "2", "--j", "5/2", "--m", "-3/2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let neg = run(dir.path(), &["analyze", "--alpha", "-0.1"]);
    assert_eq!(neg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&neg.stderr).contains("alpha"));
}
