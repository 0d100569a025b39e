use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--desk",
    "--total-steps", "300",
    "--warmup-steps", "100",
    "--eval-interval", "100",
    "--eval-episodes", "1",
    "--batch-size", "16",
    "--n-critics", "2",
    "--n-atoms", "6",
    "--critic-hidden", "8",
    "--policy-hidden", "8",
    "--max-episode-steps", "50",
    "--calib-warmup", "100",
    "--calib-batch", "80",
    "--bias-window", "100",
    "--bias-tail", "10",
];

fn acc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acc")).args(args).output().expect("spawn acc")
}

fn with_tiny<'a>(head: &[&'a str], dir: &'a str) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(TINY);
    v.extend_from_slice(&["--output-dir", dir]);
    v
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn train_writes_log_summary_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = acc(&with_tiny(&["train", "--agent", "acc_tqc", "--seed", "3"], d));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let name = "pendulum-acc_tqc-q1-s3";
    assert!(dir.path().join(format!("{name}.csv")).exists());
    assert!(dir.path().join(format!("{name}.summary.jsonl")).exists());
    let cfg = fs::read_to_string(dir.path().join(format!("{name}.config"))).unwrap();
    assert!(cfg.contains("total_steps = 300"));
    assert!(cfg.contains("lr = 0.001"), "desk profile kept under flag overrides");
    assert!(String::from_utf8_lossy(&out.stdout).contains("completed"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# sweep base\nagent = td3\nseed = 9\ngamma = 0.9\n").unwrap();
    let mut args = with_tiny(&["train", "--config", file.to_str().unwrap(), "--seed", "4"], d);
    args.extend_from_slice(&["--checkpoint", "true"]);
    let out = acc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = fs::read_to_string(dir.path().join("pendulum-td3-q1-s4.config")).unwrap();
    assert!(cfg.contains("gamma = 0.9"));
    assert!(dir.path().join("pendulum-td3-q1-s4.ckpt").exists());
}

#[test]
fn bad_input_is_reported() {
    let out = acc(&["train", "--agent", "dqn"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dqn"));
    let out = acc(&["train", "--no-such-flag", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = acc(&["analyze", "--input", "/definitely/missing", "--output", "/tmp/x"]);
    assert!(!out.status.success());
}

#[test]
fn suite_then_analyze_produces_tables() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let r = runs.to_str().unwrap();
    let mut args = with_tiny(&["suite", "--seeds", "0,1", "--agents", "acc_tqc,tqc_fixed", "--ds", "0,2.5"], r);
    args.extend_from_slice(&["--envs", "pendulum,pointmass", "--parallelism", "2"]);
    let out = acc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 runs, 0 failed"));
    assert_eq!(fs::read_dir(&runs).unwrap().count(), 12 * 3);

    let tables = dir.path().join("tables");
    let t = tables.to_str().unwrap();
    let out = acc(&["analyze", "--input", r, "--output", t, "--resamples", "200", "--smooth", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let curves = csv_rows(&tables.join("curves.csv"));
    // 3 algorithms × 3 eval points, pooled over both tasks.
    assert_eq!(curves.len(), 9);
    for row in &curves {
        let (est, lo, hi): (f64, f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap(), row[5].parse().unwrap());
        assert!(lo <= est + 1e-12 && est <= hi + 1e-12, "{row:?}");
        assert_eq!(row[7], "2");
        assert_eq!(row[8], "4");
    }
    assert_eq!(csv_rows(&tables.join("per_task.csv")).len(), 3 * 2 * 3);
    let traj = csv_rows(&tables.join("d_trajectory.csv"));
    assert!(traj.iter().any(|r| r[0] == "acc_tqc-q1" && r[3] == "d"));
    assert!(traj.iter().filter(|r| r[0] == "tqc_fixed-q1-d0").all(|r| r[5] == "0"));
    assert!(!csv_rows(&tables.join("bias.csv")).is_empty());
}
