use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use linflow::cli::{example_config, ExperimentConfig};
use linflow::flows::FlowKind;

fn linflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linflow"))
        .args(args)
        .env("LINFLOW_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

fn short_example1() -> ExperimentConfig {
    let mut cfg = example_config(1, FlowKind::ProjectionConsensus);
    cfg.integrator.t_end = 2.0;
    cfg.integrator.sample_stride = 50;
    cfg
}

#[test]
fn simulate_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &short_example1());
    let out = tmp.path().join("run");
    let res = linflow(&["simulate", &cfg], &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["trajectory.csv", "summary.json", "monitor_f_sharp.csv", "monitor_disagreement.csv", "monitor_h_sharp.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["flow"], "projection_consensus");
    assert_eq!(summary["final_states"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_output_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &short_example1());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(linflow(&["simulate", &cfg], &a).status.code(), Some(0));
    assert_eq!(linflow(&["simulate", &cfg], &b).status.code(), Some(0));
    for f in ["trajectory.csv", "monitor_f_sharp.csv", "monitor_average.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short_example1();
    cfg.system.h[2] = vec![0.0, 0.0];
    let path = write_config(tmp.path(), &cfg);
    let res = linflow(&["simulate", &path], tmp.path());
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 2"));

    let mut cfg = short_example1();
    cfg.integrator.step = -1e-3;
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(linflow(&["simulate", &path], tmp.path()).status.code(), Some(1));

    assert_eq!(linflow(&["simulate", "/nonexistent/config.json"], tmp.path()).status.code(), Some(1));
    assert_eq!(linflow(&["reproduce", "4"], tmp.path()).status.code(), Some(1));
}

#[test]
fn divergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = example_config(3, FlowKind::consensus_projection(100.0));
    // Far outside the RK4 stability region for this gain.
    cfg.integrator.step = 0.5;
    cfg.integrator.t_end = 200.0;
    let path = write_config(tmp.path(), &cfg);
    let res = linflow(&["simulate", &path], tmp.path());
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn check_graph_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &short_example1());
    let res = linflow(&["check-graph", &path, "--T", "1", "--delta", "0.5", "--horizon", "5"], tmp.path());
    assert_eq!(res.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["ujsc"], true);
    assert_eq!(report["balanced"], true);

    let cycle = example_config(3, FlowKind::ProjectionConsensus);
    let path = write_config(tmp.path(), &cycle);
    let report: serde_json::Value =
        serde_json::from_slice(&linflow(&["check-graph", &path], tmp.path()).stdout).unwrap();
    assert_eq!(report["balanced"], true);
    assert_eq!(report["bijc"], true);

    let graph_only = tmp.path().join("graph.json");
    fs::write(&graph_only, r#"{"nodes": 3, "segments": [{"arcs": [[0, 1, 1.0], [1, 0, 1.0]]}]}"#).unwrap();
    let res = linflow(&["check-graph", graph_only.to_str().unwrap()], tmp.path());
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["ujsc"], false);
}

#[test]
fn analyze_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &example_config(3, FlowKind::consensus_projection(1.0)));
    let res = linflow(&["analyze", &path, "--k-sweep", "1,5,100"], tmp.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let eq = report["equilibrium"].as_array().unwrap();
    assert_eq!(eq.len(), 3);
    let lmin: Vec<f64> = eq.iter().map(|r| r["lambda_min"].as_f64().unwrap()).collect();
    assert!(lmin[0] < lmin[1] && lmin[1] < lmin[2]);

    let res = linflow(&["analyze", &path, "--limit", "balanced"], tmp.path());
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("Case I/II required"));

    let path = write_config(tmp.path(), &example_config(2, FlowKind::consensus_projection(1.0)));
    let report: serde_json::Value =
        serde_json::from_slice(&linflow(&["analyze", &path], tmp.path()).stdout).unwrap();
    let limit: Vec<f64> = report["prediction"]["limit"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(linflow::numkit::dist(&limit, &[0.0, 1.0, 2.0]) < 1e-12);
}

#[test]
fn reproduce_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let res = linflow(&["reproduce", "2"], tmp.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    let dir = tmp.path().join("example2");
    assert!(dir.join("consensus_projection_monitor_limit_distance.csv").exists());
    assert!(dir.join("summary.json").exists());

    // Example 3's gap(K) is identically zero, so its strict-decrease verdict fails.
    let res = linflow(&["reproduce", "3"], tmp.path());
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("PASS energy_decreasing_in_gain"), "{stdout}");
    assert!(stdout.contains("PASS equilibrium_match"), "{stdout}");
    assert!(tmp.path().join("example3/energy.csv").exists());
}

#[test]
fn config_round_trip_through_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = example_config(2, FlowKind::ConsensusProjectionDecay { gain: 2.0 });
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(ExperimentConfig::load(Path::new(&path)).unwrap(), cfg);
}
