use std::path::Path;
use std::process::Command;

fn l1flow() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l1flow"))
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn run_writes_outputs_and_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = l1flow()
        .arg("run")
        .arg(configs().join("fixture_centralized.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["trajectory.csv", "summary.json", "config.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["l1_gap"].as_f64().unwrap() <= 1e-3);

    // the echoed config runs again to the same files
    let again = tempfile::tempdir().unwrap();
    let status = l1flow()
        .arg("run")
        .arg(dir.path().join("config.json"))
        .arg("--out")
        .arg(again.path())
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["trajectory.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap()
        );
    }
}

#[test]
fn unconverged_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.json");
    std::fs::write(
        &cfg,
        r#"{"system": {"kind": "fixture_paper"}, "graph": "path4", "flow": "consensus", "h": 0.001, "t_max": 0.5}"#,
    )
    .unwrap();
    let out = l1flow()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"system": {"kind": "fixture_paper"}, "graph": "path4", "flow": "distributed_l1", "delta_bar": -1}"#,
    )
    .unwrap();
    let out = l1flow().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_bar"));
}

#[test]
fn oracle_and_fixture_print_json() {
    let out = l1flow()
        .arg("oracle")
        .arg(configs().join("fixture_centralized.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let cert: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((cert["optimal_value"].as_f64().unwrap() - 2.026450931382044).abs() < 1e-10);

    let out = l1flow().arg("fixture").output().unwrap();
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["blocks"].as_array().unwrap().len(), 4);
    assert_eq!(doc["edges"][0], serde_json::json!([1, 2]));
}

#[test]
fn bound_reports_a_positive_limit() {
    let out = l1flow()
        .args(["bound", "--samples", "200"])
        .arg(configs().join("fixture_distributed_db0.1_d0.1.json"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let est: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(est["delta_max"].as_f64().unwrap() > 0.0);
}

#[test]
fn summary_matches_last_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let status = l1flow()
        .arg("run")
        .arg(configs().join("fixture_distributed_db1_d0.01.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!((last[0] - summary["stop_time"].as_f64().unwrap()).abs() <= 1e-12);
    assert!((last[1] - summary["final_consensus_residual"].as_f64().unwrap()).abs() <= 1e-15);
    assert!((last[2] - summary["final_constraint_residual"].as_f64().unwrap()).abs() <= 1e-15);
    // per-agent l1 norms recomputed from the state columns
    let n = 12;
    for (i, want) in summary["final_l1_norms"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
    {
        let got: f64 = last[4 + i * n..4 + (i + 1) * n]
            .iter()
            .map(|v| v.abs())
            .sum();
        assert!((got - want.as_f64().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn shipped_configs_validate() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg =
            l1flow_core::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validated().unwrap();
        count += 1;
    }
    assert!(count >= 8);
}
