use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output};

use contract_cli::{run, Command, RunManifest};
use serde_json::Value;

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_contracts"))
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("model.json");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = r#"{"K": 3.0, "k_a": 0.05, "schedule": [0, 0.5, 1.0], "run": {"n_y": 24, "y_max": 4.0}}"#;

fn stderr_line(o: &Output) -> String {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    text.trim_end().to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_surfaces_with_pinned_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["period_1.csv", "period_2.csv", "payment_1.csv", "summary.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let text = fs::read_to_string(out.join("period_1.csv")).unwrap();
    let mut origin_rows = 0;
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        if cells[1] == 0.0 {
            assert_eq!(cells[2].to_bits(), 0.0f64.to_bits());
            origin_rows += 1;
        }
    }
    assert!(origin_rows > 1);
}

#[test]
fn command_line_overrides_beat_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--set", "k_a=0.2", "--set", "run.n_y=30", "--ny", "32"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["model"]["k_a"], 0.2);
    // dedicated flags apply after --set
    assert_eq!(s["grid"]["n_y"], 32);
    assert_eq!(s["grid"]["y_max"], 4.0);
}

#[test]
fn user_errors_exit_one_with_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = bin()
        .args(["solve", "--config", "/nonexistent.json", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("error: io: "));
    assert!(!out.exists());

    let cfg = config(tmp.path(), SMALL);
    let o = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--set", "gamma=1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("error: invalid_model: "));

    let o = bin().args(["solve", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr_line(&o).starts_with("error: usage: "));
}

#[test]
fn broken_invariant_exits_two_and_removes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // coarse discounted grid: the scheme undershoots the zero-control bound
    let cfg = config(
        tmp.path(),
        r#"{"k_a": 0.2, "schedule": [0, 2, 4, 6, 8], "run": {"n_y": 40}}"#,
    );
    let out = tmp.path().join("out");
    let o = bin()
        .args(["verify-bounds", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_line(&o).starts_with("error: sandwich_violation: "));
    assert!(!out.exists());
}

#[test]
fn failed_run_keeps_existing_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let m = RunManifest::new(Command::Simulate, &cfg, &out).with("run.y0", "100");
    let e = run(&m).unwrap_err();
    assert_eq!((e.code.as_str(), e.status), ("out_of_range", 1));
    let left: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, vec!["keep.txt"]);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), SMALL);
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let out = tmp.path().join(format!("o{k}"));
            let m = RunManifest::new(Command::Simulate, &cfg, &out)
                .with("run.paths", "500")
                .with("run.steps", "20")
                .with("run.record_paths", "true")
                .with("run.deviations", "0.5,-1");
            run(&m).unwrap();
            let mut bytes = fs::read(out.join("summary.json")).unwrap();
            bytes.extend(fs::read(out.join("paths.csv")).unwrap());
            bytes
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let other = tmp.path().join("o2");
    run(&RunManifest::new(Command::Simulate, &cfg, &other).with("run.paths", "500").with("run.seed", "1")).unwrap();
    let a = &summary(&tmp.path().join("o0"))["report"]["estimate"];
    assert!(a.is_f64());
    assert_ne!(&summary(&other)["report"]["estimate"], a);
}

#[test]
fn frequency_sweep_rows_rise_with_payment_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"schedule": [0, 2], "run": {"n_y": 32, "horizon": 2, "values": [1, 2, 4]}}"#);
    let out = tmp.path().join("out");
    run(&RunManifest::new(Command::SweepFrequency, &cfg, &out)).unwrap();
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for w in rows.windows(2) {
        for c in 1..w[0].len() {
            assert!(w[1][c] >= w[0][c] - 1e-9, "{:?}", w);
        }
    }
}

#[test]
fn distribution_sweep_leads_with_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"schedule": [0, 2], "run": {"n_y": 32, "horizon": 2, "values": [0.5, 1.5]}}"#);
    let out = tmp.path().join("out");
    run(&RunManifest::new(Command::SweepDistribution, &cfg, &out)).unwrap();
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let firsts: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(firsts, vec![2.0, 0.5, 1.5]);
    assert!(summary(&out)["baseline"].is_object());
}

#[test]
fn bad_sweep_value_is_a_user_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"schedule": [0, 2], "run": {"n_y": 32, "values": [1.5]}}"#);
    let e = run(&RunManifest::new(Command::SweepFrequency, &cfg, tmp.path().join("o"))).unwrap_err();
    assert_eq!((e.code.as_str(), e.status), ("invalid_argument", 1));
}
