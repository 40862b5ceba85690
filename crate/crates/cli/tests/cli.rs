use std::process::Command;

fn lerw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lerw"))
}

fn tmp(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lerw-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn grid_reports_counts_and_writes_vertices() {
    let out = tmp("grid");
    let o = lerw().args(["grid", "--delta", "0.125", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = v["interior"].as_u64().unwrap();
    assert!(n > 150 && n < 220, "{n}");
    let csv = std::fs::read_to_string(out.join("vertices.csv")).unwrap();
    assert_eq!(csv.lines().count() as u64, n + 1);
}

#[test]
fn discrete_sampling_is_seeded() {
    let (a, b) = (tmp("a"), tmp("b"));
    for d in [&a, &b] {
        let o = lerw().args(["sample-discrete", "--delta", "0.0625", "--count", "2", "--seed", "9", "--out"]).arg(d).output().unwrap();
        assert!(o.status.success());
    }
    for f in ["lerw_0.csv", "lerw_1.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn extract_driving_writes_capacities() {
    let out = tmp("extract");
    let o = lerw().args(["extract-driving", "--delta", "0.0625", "--subdivide", "2", "--seed", "3", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("driving.csv")).unwrap();
    let caps: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(caps.len() >= 2);
    assert!(caps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn unknown_experiment_fails() {
    let o = lerw().args(["experiment", "no_such_thing"]).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn experiment_writes_report_and_sets_exit_code() {
    let out = tmp("exp");
    let o = lerw().args(["experiment", "loewner_roundtrip", "--seed", "4", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["experiment"], "loewner_roundtrip");
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(out.join("summary.md").exists());
}
