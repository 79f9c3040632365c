use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
dimension = 2
T = 0.5
dt = 1e-3
seeds = [4, 9]
starts = [[0.2, 0.05], [-0.3, 0.0]]

[drift]
kind = "example"

[derivative]
method = "both"
min_lengths = [0.01]

[scan]
x1_lo = -1.0
x1_hi = 1.0
n_points = 32
x2 = 0.1
"#;

fn rflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflow"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_all(config: &Path, out: &Path, workers: &str) {
    for cmd in ["simulate", "derivative", "scan"] {
        let o = rflow(&[
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn outputs_are_identical_across_reruns_and_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_all(&config, &a, "1");
    run_all(&config, &b, "1");
    run_all(&config, &c, "4");
    let first = snapshot(&a);
    assert!(first.len() > 10);
    assert_eq!(first, snapshot(&b));
    assert_eq!(first, snapshot(&c));
}

#[test]
fn simulate_writes_one_csv_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("out");
    let o = rflow(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(o.status.success());
    let dir = out.join("simulate");
    assert!(dir.join("path_seed7_start0.csv").exists());
    assert!(dir.join("path_seed7_start1.csv").exists());
    assert!(!dir.join("path_seed4_start0.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}

#[test]
fn bad_configs_fail_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "dimension = 2\nT = ".to_string(),
        CONFIG.replace("dt = 1e-3", "dt = -1e-3"),
        CONFIG.replace("seeds = [4, 9]", "seeds = []"),
        CONFIG.replace("[-0.3, 0.0]", "[-0.3, -0.1]"),
        CONFIG.replace("x2 = 0.1", "x2 = -0.1"),
        CONFIG.replace("kind = \"example\"", "kind = \"cubic\""),
        CONFIG.replace("n_points", "points"),
    ];
    for (i, text) in cases.iter().enumerate() {
        let config = write_config(tmp.path(), text);
        let out = tmp.path().join(format!("out{i}"));
        for cmd in ["simulate", "derivative", "scan"] {
            let o = rflow(&[
                cmd,
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(!o.status.success(), "case {i} accepted by {cmd}");
            assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
            assert!(!out.exists(), "case {i}: {cmd} wrote output");
        }
    }
    let o = rflow(&[
        "simulate",
        "--config",
        tmp.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn derivative_override_picks_the_method() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("out");
    let o = rflow(&[
        "derivative",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--method",
        "product",
        "--seed",
        "4",
        "--T",
        "0.25",
        "--dt",
        "1e-3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("derivative");
    assert!(dir.join("derivative_seed4_start0_product.csv").exists());
    assert!(!dir.join("derivative_seed4_start0_picard.csv").exists());
    let csv = fs::read_to_string(dir.join("derivative_seed4_start0_product.csv")).unwrap();
    assert_eq!(csv.lines().count(), 252);
    assert!(csv.starts_with("time,g_1_1,g_1_2,g_2_1,g_2_2,method,residual"));
}

#[test]
fn scan_far_from_the_boundary_is_vacuous() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &CONFIG.replace("x2 = 0.1", "x2 = 100.0"));
    let out = tmp.path().join("out");
    let o = rflow(&[
        "scan",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("vacuous"));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("scan/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["vacuous"], true);
    assert_eq!(summary["seeds_with_jump"], 0);
}

#[test]
fn verify_runs_a_single_check() {
    let o = rflow(&["verify", "--level", "quick", "--check", "3"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("[PASS]"));
    assert!(!rflow(&["verify", "--check", "14"]).status.success());
}
