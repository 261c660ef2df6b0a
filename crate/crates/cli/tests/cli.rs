use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pingpong(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pingpong"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_cones_reports_q1_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 7\nprofile = Q(1)\n[verify-cones]\nn_samples = 20000\nsigma_samples = 200\n",
    );
    let out = pingpong(
        dir.path(),
        &["--config", &cfg, "--out", "o", "verify-cones"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = read_json(&dir.path().join("o/verify_cones.json"));
    assert!((v["lambda"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(v["n0"].as_u64(), Some(13));
    assert_eq!(v["violations"].as_u64(), Some(0));
    let m = read_json(&dir.path().join("o/manifest.json"));
    assert_eq!(m["all_hard_passed"], Value::Bool(true));
    assert_eq!(m["seed"].as_u64(), Some(7));
}

#[test]
fn simulate_writes_the_hand_checked_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\n[simulate]\nt0 = 0.25\nv0 = 0.5\nn_steps = 1\n",
    );
    let out = pingpong(dir.path(), &["--config", &cfg, "--out", "o", "simulate"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("o/simulate.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["n", "t", "v", "w", "s"]);
    assert_eq!(rows.len(), 3);
    let t: f64 = rows[2][1].parse().unwrap();
    let v: f64 = rows[2][2].parse().unwrap();
    let s: f64 = rows[1][4].parse().unwrap();
    assert!((t - 0.75).abs() < 1e-12 && (v - 1.0).abs() < 1e-12 && (s - 0.5).abs() < 1e-12);
}

#[test]
fn repeated_runs_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 3\nprofile = N(2)\ng = 1\n[simulate]\nn_steps = 200\n[fragmentation]\nn_max = 3\nn_trials = 20\nn0_trials = 2\ncurve_length = 1e-5\ngrowth_trials = 10\n",
    );
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = pingpong(
            dir.path(),
            &[
                "--config",
                &cfg,
                "--out",
                out,
                "--threads",
                threads,
                "report",
            ],
        );
        assert!(
            o.status.code() == Some(0) || o.status.code() == Some(1),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 4);
    for name in names {
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
}

#[test]
fn seed_flag_overrides_and_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[simulate]\n");
    pingpong(dir.path(), &["--config", &cfg, "--out", "a", "simulate"]);
    pingpong(
        dir.path(),
        &["--config", &cfg, "--out", "b", "--seed", "2", "simulate"],
    );
    let a = read_json(&dir.path().join("a/manifest.json"));
    let b = read_json(&dir.path().join("b/manifest.json"));
    assert_eq!(b["seed"].as_u64(), Some(2));
    assert_ne!(a["config_hash"], b["config_hash"]);
}

#[test]
fn list_profiles_shows_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let out = pingpong(dir.path(), &["list-profiles", "--g", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let line = |name: &str| {
        text.lines()
            .find(|l| l.trim_start().starts_with(name))
            .unwrap()
            .to_string()
    };
    assert!(line("Q(1)").contains("positive-convex"));
    assert!(line("N(2)").contains("strongly-concave"));
}

#[test]
fn config_errors_exit_with_code_two_and_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n\n[verify-cones]\nn_sample = 10\n");
    let out = pingpong(dir.path(), &["--config", &cfg, "verify-cones"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("n_sample"), "{err}");

    let cfg = write_config(dir.path(), "profile = Q(1)\n");
    let out = pingpong(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn profile_files_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("w.profile"),
        include_str!("../profiles/q1.profile"),
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 1\nprofile = w.profile\n[verify-cones]\nn_samples = 1000\nsigma_samples = 50\n",
    );
    let out = pingpong(
        dir.path(),
        &["--config", &cfg, "--out", "o", "verify-cones"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        read_json(&dir.path().join("o/verify_cones.json"))["n0"].as_u64(),
        Some(13)
    );
}
