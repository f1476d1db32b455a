use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn csmaflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csmaflow"))
        .args(args)
        .env_remove("CSMAFLOW_OUTPUT")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("csmaflow-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).expect("diagnostic is JSON")
}

#[test]
fn bowtie_equilibrium_alpha_limit() {
    let dir = scratch("eq");
    let out = csmaflow(&["run", "equilibrium", "--scenario", "bowtie", "--alpha-limit", "--output", &s(&dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("throughput.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("phi_1,phi_2,phi_3,phi_4,phi_5"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    for (got, want) in row.iter().zip([0.75, 0.75, 0.5, 1.0, 0.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn bowtie_equilibrium_large_alpha() {
    let dir = scratch("eq-alpha");
    let out = csmaflow(&["run", "equilibrium", "--scenario", "bowtie", "--state", "1,1,1,1,0", "--alpha", "1e6", "--output", &s(&dir)]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("throughput.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    for (got, want) in row.iter().zip([0.75, 0.75, 0.5, 1.0, 0.0]) {
        assert!((got - want).abs() < 1e-3);
    }
}

#[test]
fn empty_scenario_is_a_parse_error_and_writes_nothing() {
    let dir = scratch("empty");
    let sc = dir.join("empty.toml");
    fs::write(&sc, "").unwrap();
    let outdir = dir.join("out");
    let out = csmaflow(&["run", "equilibrium", "--scenario", &s(&sc), "--output", &s(&outdir)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "parse");
    assert!(!outdir.exists());
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    let missing = csmaflow(&["run", "equilibrium", "--scenario", "/nonexistent/x.toml", "--output", &s(&dir.join("a"))]);
    assert_eq!(missing.status.code(), Some(1));

    let bad_state = csmaflow(&["run", "equilibrium", "--scenario", "bowtie", "--state", "1,1", "--output", &s(&dir.join("b"))]);
    assert_eq!(bad_state.status.code(), Some(3));
    assert!(!dir.join("b").exists());

    let bad_policy = csmaflow(&["run", "equilibrium", "--scenario", "fig1", "--policy", "standard_infra", "--output", &s(&dir.join("c"))]);
    assert_eq!(bad_policy.status.code(), Some(3));

    let no_kind = csmaflow(&["run", "--scenario", "fig1", "--output", &s(&dir.join("d"))]);
    assert_eq!(no_kind.status.code(), Some(3));

    let unknown_flag = csmaflow(&["run", "equilibrium", "--bogus"]);
    assert_eq!(unknown_flag.status.code(), Some(2));

    let unknown_key = dir.join("unknown.toml");
    fs::write(&unknown_key, "name = \"x\"\nclasses = 1\nchannels = 1\nmode = \"adhoc\"\nbogus = 1\n").unwrap();
    let out = csmaflow(&["run", "equilibrium", "--scenario", &s(&unknown_key), "--output", &s(&dir.join("e"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn command_line_overrides_scenario() {
    let dir = scratch("override");
    let sc = dir.join("pair.toml");
    fs::write(
        &sc,
        "name = \"pair\"\nclasses = 2\nchannels = 1\nmode = \"adhoc\"\nshared_graph = [[1, 2]]\n\n\
         [experiment]\nkind = \"equilibrium\"\nseed = 3\nstate = [1, 0]\n",
    )
    .unwrap();
    let a = dir.join("a");
    assert!(csmaflow(&["run", "--scenario", &s(&sc), "--output", &s(&a)]).status.success());
    let row = fs::read_to_string(a.join("throughput.csv")).unwrap();
    assert_eq!(row.lines().nth(1), Some("0.5,0"));

    let b = dir.join("b");
    assert!(csmaflow(&["run", "--scenario", &s(&sc), "--state", "0,1", "--seed", "9", "--output", &s(&b)]).status.success());
    let row = fs::read_to_string(b.join("throughput.csv")).unwrap();
    assert_eq!(row.lines().nth(1), Some("0,0.5"));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["experiment"]["state"], serde_json::json!([0, 1]));
    assert_eq!(m["kind"], "equilibrium");
}

#[test]
fn output_directory_from_environment() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_csmaflow"))
        .args(["run", "equilibrium", "--scenario", "fig1"])
        .env("CSMAFLOW_OUTPUT", dir.join("from-env"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("from-env").join("throughput.csv").exists());
}

#[test]
fn capacity_sweep_and_plot_export() {
    let dir = scratch("sweep");
    let out = csmaflow(&["run", "capacity-sweep", "--scenario", "bowtie", "--grid", "6", "--output", &s(&dir.join("r"))]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("r").join("region.csv")).unwrap();
    assert!(csv.starts_with("rho_1,rho_3,status,margin\n"));
    assert_eq!(csv.lines().count(), 37);

    let plot = dir.join("plot");
    let out = csmaflow(&["export-region-plot", "--input", &s(&dir.join("r").join("region.csv")), "--output", &s(&plot)]);
    assert!(out.status.success());
    for f in ["optimal_boundary.dat", "standard_boundary.dat", "points_interior.dat", "points_exterior.dat"] {
        assert!(plot.join(f).exists(), "{f}");
    }
    let standard = fs::read_to_string(plot.join("standard_boundary.dat")).unwrap();
    assert!(standard.lines().any(|l| l.starts_with("0.5 ")));
}

#[test]
fn plot_export_edge_cases() {
    let dir = scratch("plot");
    let empty = dir.join("empty.csv");
    fs::write(&empty, "rho_1,rho_3,status,margin\n").unwrap();
    let out = csmaflow(&["export-region-plot", "--input", &s(&empty), "--output", &s(&dir.join("a"))]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(dir.join("a").join("optimal_boundary.dat")).unwrap().lines().count(), 1);

    let bad = dir.join("bad.csv");
    fs::write(&bad, "x,y\n1,2\n").unwrap();
    let out = csmaflow(&["export-region-plot", "--input", &s(&bad), "--output", &s(&dir.join("b"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_trajectories_and_summary() {
    let dir = scratch("sim");
    let out = csmaflow(&[
        "run", "simulate", "--scenario", "fig2b", "--horizon", "50", "--replications", "2", "--samples", "10", "--output", &s(&dir),
    ]);
    assert!(out.status.success());
    let traj = fs::read_to_string(dir.join("trajectory_1.csv")).unwrap();
    assert!(traj.starts_with("time,x_1,x_2,x_3,x_4,x_5,x_6\n"));
    assert_eq!(traj.lines().count(), 12);
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
