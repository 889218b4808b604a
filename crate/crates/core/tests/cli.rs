use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = "\
[spheroid]
a = 80.0
c = 20.0

[intruders]
first_spawn_s = 20.0

[simulation]
duration_s = 120.0
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybrid-coverage"))
}

fn baseline() -> String {
    format!("{}/../../scenarios/baseline.toml", env!("CARGO_MANIFEST_DIR"))
}

fn simulate(scenario: &Path, out: &Path, seed: u64) -> Output {
    bin()
        .arg("simulate")
        .arg(scenario)
        .args(["--seed", &seed.to_string(), "--out"])
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn missing_scenario_is_reported() {
    let out = bin().args(["simulate", "/nonexistent/scenario.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, format!("{SHORT}\n[outputs]\nstride = 3\n")).unwrap();
    let out = bin().arg("check").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));
}

#[test]
fn simulate_writes_outputs_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    fs::write(&path, SHORT).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, 4), (&b, 4), (&c, 5)] {
        let r = simulate(&path, out, seed);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["scenario.toml", "metrics.csv", "events.jsonl", "particles.json", "checker.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(read(&a, "events.jsonl"), read(&b, "events.jsonl"));
    assert_eq!(read(&a, "metrics.csv"), read(&b, "metrics.csv"));
    assert_ne!(read(&a, "events.jsonl"), read(&c, "events.jsonl"));

    let metrics = read(&a, "metrics.csv");
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,e_norm,min_dist,mode_1,mode_2,mode_3,mode_4,normal_1,normal_2,normal_3,normal_4"
    );
    assert_eq!(lines.count(), 2400);
    // The written configuration carries the overrides and reloads.
    let effective = read(&a, "scenario.toml");
    assert!(effective.contains("seed = 4"), "{effective}");
    let again = dir.path().join("again");
    let r = bin().arg("simulate").arg(a.join("scenario.toml")).arg("--out").arg(&again).output().unwrap();
    assert!(r.status.success());
    assert_eq!(read(&a, "events.jsonl"), read(&again, "events.jsonl"));
}

#[test]
fn check_reports_and_exits_by_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["check", &baseline()])
        .env("HYBRID_COVERAGE_OUT", dir.path())
        .output()
        .unwrap();
    // The interception margin is negative for the baseline.
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("avoidance") && l.contains("Pass")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("schedule") && l.contains("Warn")), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("checker.json")).unwrap()).unwrap();
    assert_eq!(report["avoidance"]["verdict"], "PASS");
}

#[test]
fn geodesic_on_a_sphere() {
    let out = bin().args(["geodesic", "--a", "80", "--c", "80", "0", "0", "0", "90"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let d: f64 = text.lines().next().unwrap().strip_prefix("distance ").unwrap().parse().unwrap();
    assert!((d - 40.0 * std::f64::consts::PI).abs() < 1e-9, "{text}");
    let south = bin().args(["geodesic", "--a", "80", "--c", "20", "-10", "0", "-40", "60"]).output().unwrap();
    assert!(south.status.success());
}

#[test]
fn partition_lists_equal_bands() {
    let out = bin().args(["partition", "--a", "80", "--c", "20", "--n", "5"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "band,z_hi,z_lo,area,rel_error");
    assert_eq!(rows.len(), 5);
    for r in &rows[1..] {
        let err: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err < 1e-8, "{r}");
    }
    let bad = bin().args(["partition", "--a", "80", "--c", "20", "--n", "1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
