//! Exit codes and output files of the `dualid` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dualid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualid"))
        .args(args)
        .output()
        .expect("spawn dualid")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("sybil_direct.toml");
    let out = dir.path().join("run");
    let o = dualid(&[
        "run",
        "--config",
        arg(&cfg),
        "--seed",
        "4",
        "--out",
        arg(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "events.jsonl", "config.echo"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary
        .lines()
        .any(|l| l.starts_with("sybil_direct,4,precision,")));
    let events = std::fs::read_to_string(out.join("events.jsonl")).unwrap();
    assert!(events
        .lines()
        .all(|l| l.starts_with('{') && l.ends_with('}')));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("emergency_alert.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(
            code(&dualid(&["run", "--config", arg(&cfg), "--out", arg(out)])),
            0
        );
    }
    for f in ["summary.csv", "events.jsonl", "config.echo"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_writes_one_row_set_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("no_attack.toml");
    let out = dir.path().join("sweep");
    let o = dualid(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--seeds",
        "2",
        "--vary",
        "noise.sigma_gnss_m=1:2:2",
        "--out",
        arg(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,seed,vary_key,vary_value,metric,value")
    );
    let points: std::collections::BTreeSet<(String, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[2], "noise.sigma_gnss_m");
            (f[1].to_string(), f[3].to_string())
        })
        .collect();
    assert_eq!(points.len(), 4);
}

#[test]
fn validate_accepts_every_shipped_config() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let o = dualid(&["validate", "--config", arg(&path)]);
        assert_eq!(
            code(&o),
            0,
            "{}: {}",
            path.display(),
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("no_attack.toml")).unwrap();
    let typo = dir.path().join("typo.toml");
    std::fs::write(&typo, text + "\n[noise]\nsigma_gsns_m = 1.0\n").unwrap();
    let o = dualid(&["validate", "--config", arg(&typo)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma_gsns_m"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&dualid(&["run", "--config", arg(&missing)])), 2);

    let cfg = configs().join("no_attack.toml");
    let o = dualid(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--vary",
        "noise.sigma_gnss_m=1:2",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn output_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = configs().join("no_attack.toml");
    let o = dualid(&[
        "run",
        "--config",
        arg(&cfg),
        "--out",
        arg(&blocker.join("out")),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}
