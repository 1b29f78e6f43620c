//! Drives the installed binary end to end through std::process.

use std::path::Path;
use std::process::{Command, Output};

use vbr::bench::CSV_HEADER;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbr"))
        .args(args)
        .output()
        .expect("binary spawns")
}

#[test]
fn bench_writes_csv_to_stdout() {
    let out = run(&[
        "bench", "--scheme", "vbr", "--ds", "list", "--threads", "2", "--range", "64", "--ms",
        "20", "--reps", "1", "--seed", "7",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let row = lines.next().expect("one data row");
    assert!(row.starts_with("vbr,list,2,64,25i25d50r,20,"), "row: {row}");
    let mops: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!(mops > 0.0);
    assert_eq!(lines.next(), None);
}

#[test]
fn bench_writes_csv_to_a_file() {
    let path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("bench_out.csv");
    let out = run(&[
        "bench", "--ds", "hash", "--threads", "1", "--range", "32", "--ms", "10", "--reps", "1",
        "--csv",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn zero_threads_is_a_usage_error() {
    let out = run(&["bench", "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--threads"), "stderr: {err}");
}

#[test]
fn malformed_profile_is_a_usage_error() {
    let out = run(&["bench", "--profile", "30i30d41r"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sums to 101"), "stderr: {err}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["measure"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_every_suite() {
    let out = run(&[
        "verify", "--ops", "2000", "--ms", "30", "--threads", "2", "--range", "32", "--seed",
        "3",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    for suite in ["sequential", "accounting", "interleaving", "reuse", "rollback"] {
        assert!(text.contains(&format!("verify: {suite} ... ok")), "missing {suite}: {text}");
    }
    assert!(!text.contains("FAILED"));
}

#[test]
fn verify_suite_filter_selects_one() {
    let out = run(&["verify", "--suite", "interleaving"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verify: interleaving ... ok"));
    assert!(!text.contains("sequential"));
}
