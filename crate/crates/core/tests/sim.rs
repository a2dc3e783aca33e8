mod common;

use std::path::PathBuf;
use std::process::Command;

use l1gp::dynamics::{planar_quadrotor, ModelField, Vector};
use l1gp::l1::L1Params;
use l1gp::planning::{DynamicsTag, PlannedTrajectory};
use l1gp::sim::{emit_outputs, tube_polylines, Campaign, CampaignConfig, CampaignReport, ClosedLoop, SimLog};
use l1gp::Error;

fn config_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/campaign.json"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_l1gp"))
}

fn hover_plan(p: [f64; 2], knots: usize, dt: f64) -> PlannedTrajectory {
    let mut x = Vector::zeros(6);
    x[0] = p[0];
    x[1] = p[1];
    let u = planar_quadrotor().system.hover_input();
    PlannedTrajectory::new(dt, DynamicsTag::Nominal, vec![x; knots], vec![u; knots]).unwrap()
}

fn short_log() -> SimLog {
    let setup = planar_quadrotor();
    let metric = common::quad_metric();
    let field = ModelField::nominal(&setup.system);
    let cl = ClosedLoop {
        system: &setup.system,
        uncertainty: &setup.uncertainty,
        model: &field,
        metric: &metric,
        l1: L1Params::diagonal(6, 10.0, 2e6, 30.0, 2.0, 0.1).unwrap(),
        geodesic_nodes: 8,
    };
    let x0 = Vector::from_vec(vec![0.05, -0.05, 0.02, 0.1, 0.0, 0.0]);
    cl.run(&hover_plan([0.0, 0.0], 200, 0.002), &x0, true).unwrap()
}

#[test]
fn trace_schema_and_tracking_error_column() {
    let log = short_log();
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# status=certified"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, SimLog::header(6, 2));
    assert_eq!(header.len(), 1 + 6 + 6 + 2 + 2 + 2 + 6 + 2);
    assert_eq!(header.last(), Some(&"tracking_error"));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v.len(), header.len());
        let err = (1..7).map(|i| (v[i] - v[i + 6]).powi(2)).sum::<f64>().sqrt();
        assert!((err - v[v.len() - 1]).abs() <= 1e-12 * err.max(1.0));
        rows += 1;
    }
    assert_eq!(rows, 200);
    // the loop pulls the offset in
    assert!(log.rows.last().unwrap().tracking_error < log.rows[0].tracking_error);
}

#[test]
fn uncertified_status_line() {
    let mut log = short_log();
    log.certified = false;
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("# status=UNCERTIFIED\n"));
}

#[test]
fn empty_campaign_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = CampaignReport {
        seed: 1,
        full: false,
        bounds: vec![],
        episodes: vec![],
        optimality: None,
    };
    emit_outputs(&report, &[], None, &out).unwrap();
    assert!(!out.exists());
}

#[test]
fn tube_polylines_sit_rho_off_the_path() {
    // straight climb at 45 degrees
    let n = 20;
    let states: Vec<Vector> = (0..n)
        .map(|k| {
            let mut x = Vector::zeros(6);
            x[0] = 0.1 * k as f64;
            x[1] = 0.1 * k as f64;
            x
        })
        .collect();
    let plan = PlannedTrajectory::new(0.05, DynamicsTag::Nominal, states, vec![Vector::zeros(2); n]).unwrap();
    let rho = 0.3;
    for (_, c, l, r) in tube_polylines(&plan, rho) {
        let dl = [l[0] - c[0], l[1] - c[1]];
        let dr = [r[0] - c[0], r[1] - c[1]];
        assert!((dl[0].hypot(dl[1]) - rho).abs() < 1e-12);
        assert!((dl[0] + dr[0]).abs() < 1e-12 && (dl[1] + dr[1]).abs() < 1e-12);
        // normal to the direction (1, 1)
        assert!((dl[0] + dl[1]).abs() < 1e-12);
        assert!(dl[1] > 0.0);
    }
    // stationary plan keeps a default heading
    let still = hover_plan([1.0, 2.0], 5, 0.05);
    for (_, c, l, _) in tube_polylines(&still, rho) {
        assert!(((l[0] - c[0]).hypot(l[1] - c[1]) - rho).abs() < 1e-12);
    }
}

#[test]
fn data_collection_is_seeded() {
    let campaign = Campaign::new(CampaignConfig::default(), false).unwrap();
    let a = campaign.collect_data(12, 5).unwrap();
    let b = campaign.collect_data(12, 5).unwrap();
    let c = campaign.collect_data(12, 6).unwrap();
    assert_eq!(a.inputs, b.inputs);
    assert_eq!(a.targets, b.targets);
    assert_ne!(a.inputs, c.inputs);
    // schedule: the 25-sample dataset extends the 0-sample one, the
    // 100-sample one keeps the first 25
    let d1 = campaign.schedule_dataset(1).unwrap();
    let d2 = campaign.schedule_dataset(2).unwrap();
    assert_eq!((d1.len(), d2.len()), (25, 100));
    assert_eq!(d2.prefix(25).inputs, d1.inputs);
    assert!(campaign.collect_data(0, 1).is_err());
}

#[test]
fn config_files_and_validation() {
    let c = CampaignConfig::load(config_path()).unwrap();
    assert_eq!(c.seed, 7);
    assert!(c.metric.as_ref().unwrap().is_absolute());
    assert!(c.load_metric().is_ok());
    for bad in [r#"{"gp": {"delta": 0}}"#, r#"{"episodes": []}"#, r#"{"sim": {"dt": -1}}"#, r#"{"planner": {"rollout": 3}}"#, "not json"] {
        assert!(matches!(CampaignConfig::from_json_str(bad), Err(Error::Config(_))), "{bad}");
    }
    assert!(matches!(CampaignConfig::load("/nonexistent/config.json"), Err(Error::Config(_))));
}

#[test]
fn exit_codes() {
    assert_eq!(Error::Infeasible("x".into()).exit_code(), 2);
    assert_eq!(Error::Workspace("x".into()).exit_code(), 3);
    assert_eq!(Error::Config("x".into()).exit_code(), 4);
}

#[test]
fn cli_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "unknown": true}"#).unwrap();
    let st = bin().args(["campaign", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(4));
    let st = bin().args(["certify", "--config"]).arg(config_path()).args(["--plan", "/nonexistent.csv"]).status().unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn cli_certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // hovering inside the first obstacle
    let inside = dir.path().join("inside.csv");
    hover_plan([2.6, 1.2], 40, 0.05).write_csv(std::fs::File::create(&inside).unwrap()).unwrap();
    let st = bin().args(["certify", "--config"]).arg(config_path()).arg("--plan").arg(&inside).status().unwrap();
    assert_eq!(st.code(), Some(3));

    // hovering at the start: clear, but the conservative certificate fails
    let start = dir.path().join("start.csv");
    hover_plan([0.0, 0.0], 40, 0.05).write_csv(std::fs::File::create(&start).unwrap()).unwrap();
    let out = bin().args(["certify", "--config"]).arg(config_path()).arg("--plan").arg(&start).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"]["feasible"], false);

    // a plan that breaks its own dynamics is a config error
    let mut p = hover_plan([0.0, 0.0], 40, 0.05);
    p.states[10][0] = 0.5;
    let broken = dir.path().join("broken.csv");
    p.write_csv(std::fs::File::create(&broken).unwrap()).unwrap();
    let st = bin().args(["certify", "--config"]).arg(config_path()).arg("--plan").arg(&broken).status().unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn cli_infeasible_campaign_and_forced_episode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // the conservative episode cannot be certified and nothing is written
    let st = bin().args(["campaign", "--config"]).arg(config_path()).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(!out.exists());

    let st = bin()
        .args(["campaign", "--config"])
        .arg(config_path())
        .args(["--episode", "1", "--force", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let ep = out.join("episode_1");
    for f in ["plan.csv", "trace.csv", "certificate.json", "bounds.json", "tube.csv", "envelope.csv"] {
        assert!(ep.join(f).exists(), "{f}");
    }
    for f in ["campaign.json", "bounds.csv", "tubes.csv", "dataset.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("episode_0").exists());
    let trace = std::fs::read_to_string(ep.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# status=UNCERTIFIED\n"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("campaign.json")).unwrap()).unwrap();
    let summary = &report["episodes"][0];
    assert_eq!(summary["certified"], false);
    let rho = summary["rho"].as_f64().unwrap();

    // envelope rows: xd +- rho around the plan, and samples inside it are
    // inside the position tube
    let env = std::fs::read_to_string(ep.join("envelope.csv")).unwrap();
    for line in env.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        for i in 0..6 {
            let (xd, lo, hi) = (v[1 + 4 * i], v[2 + 4 * i], v[3 + 4 * i]);
            assert!((xd - lo - rho).abs() < 1e-9 && (hi - xd - rho).abs() < 1e-9);
        }
        let (dx, dz) = (v[4] - v[1], v[8] - v[5]);
        let full = (0..6).map(|i| (v[4 + 4 * i] - v[1 + 4 * i]).powi(2)).sum::<f64>().sqrt();
        if full < rho {
            assert!(dx.hypot(dz) < rho);
        }
    }
}
