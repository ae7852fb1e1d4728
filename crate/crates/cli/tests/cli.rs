use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fairsplit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairsplit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fairsplit(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(dir: &Path, args: &[&str]) -> Value {
    serde_json::from_str(&ok(dir, args)).unwrap()
}

#[test]
fn gen_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = ok(
        dir.path(),
        &["--seed", "4", "gen", "consensus", "--measures", "3"],
    );
    let b = ok(
        dir.path(),
        &["--seed", "4", "gen", "consensus", "--measures", "3"],
    );
    let c = ok(
        dir.path(),
        &["--seed", "5", "gen", "consensus", "--measures", "3"],
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["type"], "consensus");
    assert_eq!(v["measures"].as_array().unwrap().len(), 3);
    assert!(v["measures"][0]["densities"][0].is_string());
}

#[test]
fn necklace_round_trip_through_validate() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &["gen", "necklace", "--counts", "4,6,2", "--out", "n.json"],
    );
    let nk: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    assert_eq!(nk["beads"].as_array().unwrap().len(), 12);
    let stdout = ok(
        d,
        &[
            "solve",
            "offline-necklace",
            "--instance",
            "n.json",
            "--out",
            "a.json",
        ],
    );
    assert!(stdout.is_empty());
    let report = json(
        d,
        &["validate", "--instance", "n.json", "--allocation", "a.json"],
    );
    assert_eq!(report["summary"]["pass"], true);
    assert_eq!(report["stored_counts_match"], true);
}

#[test]
fn tampered_allocation_fails_validation() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "--seed",
            "2",
            "gen",
            "consensus",
            "--measures",
            "2",
            "--out",
            "c.json",
        ],
    );
    ok(
        d,
        &[
            "solve",
            "offline-halving",
            "--instance",
            "c.json",
            "--epsilon",
            "1/8",
            "--out",
            "a.json",
        ],
    );
    assert!(fairsplit(
        d,
        &[
            "validate",
            "--instance",
            "c.json",
            "--allocation",
            "a.json",
            "--epsilon",
            "1/8"
        ]
    )
    .status
    .success());
    let mut v: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    let owners = v["allocation"]["assignee"].as_array_mut().unwrap();
    for o in owners.iter_mut() {
        *o = Value::from(0);
    }
    std::fs::write(d.join("bad.json"), v.to_string()).unwrap();
    let out = fairsplit(
        d,
        &[
            "validate",
            "--instance",
            "c.json",
            "--allocation",
            "bad.json",
            "--epsilon",
            "1/8",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn online_halving_emits_a_transcript() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "gen",
            "stream",
            "--measures",
            "2",
            "--epsilon",
            "1/2",
            "--out",
            "s.json",
        ],
    );
    let v = json(
        d,
        &[
            "solve",
            "online-halving",
            "--stream",
            "s.json",
            "--epsilon",
            "1/2",
        ],
    );
    assert_eq!(v["summary"]["pass"], true);
    assert_eq!(v["psi_monotone"], true);
    let events = v["transcript"]["events"].as_array().unwrap();
    assert!(!events.is_empty());
    assert_eq!(
        v["transcript"]["cuts"],
        v["allocation"]["cuts"].as_array().unwrap().len()
    );
}

#[test]
fn csv_has_header_and_row() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "--seed", "1", "gen", "necklace", "--counts", "6,9", "--out", "t.json",
        ],
    );
    let csv = ok(
        d,
        &[
            "--format",
            "csv",
            "solve",
            "circular2",
            "--instance",
            "t.json",
            "--agents",
            "3",
        ],
    );
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "algorithm,n,k,eps_or_m,cuts,bound,discrepancy,pass"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("circular2,2,3,") && lines[1].ends_with(",true"));
}

#[test]
fn never_cut_loses_the_game() {
    let dir = TempDir::new().unwrap();
    let out = fairsplit(
        dir.path(),
        &[
            "game",
            "--balancer",
            "never-cut",
            "--adversary",
            "consensus-n2",
            "--epsilon",
            "1/10",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["cuts"], 0);
    assert_eq!(v["result"]["transcript"]["cuts"], 0);
}

#[test]
fn potential_survives_the_necklace_adversary() {
    let dir = TempDir::new().unwrap();
    let v = json(
        dir.path(),
        &[
            "game",
            "--balancer",
            "potential-necklace",
            "--adversary",
            "necklace-n2",
            "--m",
            "256",
        ],
    );
    assert_eq!(v["result"]["pass"], true);
    assert!(v["result"]["cuts"].as_u64().unwrap() >= 8);
}

#[test]
fn bench_reports_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["bench", "--preset", "smoke", "--out", "a"]);
    ok(d, &["bench", "--preset", "smoke", "--out", "b"]);
    for ext in ["csv", "json"] {
        let a = std::fs::read(d.join(format!("a.{ext}"))).unwrap();
        let b = std::fs::read(d.join(format!("b.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext}");
    }
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn bad_input_is_an_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(
        fairsplit(d, &["bench", "--preset", "nope"]).status.code(),
        Some(2)
    );
    assert_eq!(
        fairsplit(
            d,
            &["solve", "offline-necklace", "--instance", "missing.json"]
        )
        .status
        .code(),
        Some(2)
    );
    ok(
        d,
        &["gen", "necklace", "--counts", "2,2", "--out", "n.json"],
    );
    let out = fairsplit(
        d,
        &[
            "solve",
            "offline-halving",
            "--instance",
            "n.json",
            "--epsilon",
            "1/4",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected a consensus instance"));
}
