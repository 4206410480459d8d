use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chorus_core::harness::{read_csv, EstimateRow};

fn chorus(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chorus"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("spawn chorus")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = chorus(args, cwd);
    assert!(
        out.status.success(),
        "chorus {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const ARTIFACTS: [&str; 8] = [
    "truth.csv",
    "estimates.csv",
    "errors.csv",
    "schedule.csv",
    "distances.csv",
    "receivers.csv",
    "summary.json",
    "config.json",
];

#[test]
fn run_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = chorus(&["run", "--slots", "5"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn run_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["run", "--seed", "4", "--slots", "60", "--out", out];
    ok(&args("a"), dir.path());
    ok(&args("b"), dir.path());
    for name in ARTIFACTS {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    for key in ["p50", "p90", "p99", "efficiency", "loss_rate"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.json"),
        r#"{"n_targets": 3, "slots": 20, "noise_max_offset": 0.02}"#,
    )
    .unwrap();
    ok(
        &[
            "run",
            "--seed",
            "1",
            "--config",
            "c.json",
            "--targets",
            "2",
            "--out",
            "o",
        ],
        dir.path(),
    );
    let resolved: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("o/config.json")).unwrap()).unwrap();
    assert_eq!(resolved["n_targets"], 2);
    assert_eq!(resolved["slots"], 20);
    assert_eq!(resolved["noise_max_offset"], 0.02);
    assert_eq!(resolved["seed"], 1);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"slot_length": -1.0}"#).unwrap();
    let out = chorus(&["run", "--seed", "1", "--config", "bad.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("slot_length"));
}

#[test]
fn replay_of_a_run_reproduces_its_estimates() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["run", "--seed", "2", "--slots", "80", "--out", "r"],
        dir.path(),
    );
    let stdout = ok(&["replay", "--input", "r", "--out", "p"], dir.path());
    assert!(stdout.contains("p90"));
    assert_eq!(
        fs::read(dir.path().join("r/estimates.csv")).unwrap(),
        fs::read(dir.path().join("p/estimates.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.path().join("r/summary.json")).unwrap(),
        fs::read(dir.path().join("p/summary.json")).unwrap()
    );
}

#[test]
fn replay_locates_a_synthetic_static_target() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir(&input).unwrap();
    let receivers = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)];
    let target = (0.7f64, 1.1f64);
    let mut rx = String::from("receiver,x,y\n");
    for (i, (x, y)) in receivers.iter().enumerate() {
        rx += &format!("{i},{x},{y}\n");
    }
    fs::write(input.join("receivers.csv"), rx).unwrap();
    let mut schedule = String::from("round,slot_index,kind,target_ids\n");
    let mut distances = String::from("slot,receiver,distance\n");
    for slot in 0..5 {
        let kind = if slot == 0 { "exclusive" } else { "shared" };
        schedule += &format!("{slot},{slot},{kind},0\n");
        for (i, (x, y)) in receivers.iter().enumerate() {
            let d = ((x - target.0).powi(2) + (y - target.1).powi(2)).sqrt();
            distances += &format!("{slot},{i},{d}\n");
        }
    }
    fs::write(input.join("schedule.csv"), schedule).unwrap();
    fs::write(input.join("distances.csv"), distances).unwrap();

    let stdout = ok(
        &[
            "replay",
            "--input",
            "in",
            "--out",
            "p",
            "--preset",
            "single_static",
        ],
        dir.path(),
    );
    assert!(stdout.contains("5 estimates"));
    let est: Vec<EstimateRow> = read_csv(&dir.path().join("p/estimates.csv")).unwrap();
    assert_eq!(est.len(), 5);
    for e in est {
        assert!((e.x - target.0).abs() < 1e-9 && (e.y - target.1).abs() < 1e-9);
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "sweep",
            "--variable",
            "noise",
            "--values",
            "0.01,0.05",
            "--seeds",
            "2",
            "--slots",
            "40",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert_eq!(stdout.lines().count(), 3);
    let runs = fs::read_to_string(dir.path().join("s/sweep_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
    let points = fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert!(points.starts_with("value,seeds,efficiency,p50,p90,p99"));
}

#[test]
fn analyze_blind_table_starts_at_coincident_limit() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "analyze",
            "--table",
            "blind",
            "--step",
            "0.5",
            "--samples",
            "0",
        ],
        dir.path(),
    );
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("d_ab,closed_form"));
    // Coincident targets report the d -> 0 limit, half of a's audible disk.
    let first: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[0], 0.0);
    assert!((first[1] - std::f64::consts::PI * 4.5).abs() < 1e-5);
    assert_eq!(stdout.lines().count(), 1 + 13);
}

#[test]
fn analyze_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "analyze",
            "--table",
            "separation",
            "--samples",
            "0",
            "--out",
            "t.csv",
        ],
        dir.path(),
    );
    let t = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(t.starts_with("lambda,d_s_bound\n"));
    assert_eq!(t.lines().count(), 5);
}
