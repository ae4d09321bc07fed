use std::path::Path;
use std::process::{Command, Output};

use jumpflow::io::trajectory::Trajectory;

fn jumpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn calibrate_small(dir: &Path) -> String {
    let path = dir.join("c16.json");
    let out = jumpflow(&["calibrate", "--n", "16", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path.to_str().unwrap().to_string()
}

#[test]
fn version_succeeds() {
    let out = jumpflow(&["version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("jumpflow "));
}

#[test]
fn config_errors_exit_with_2() {
    let out = jumpflow(&["run", "--alpha", "0.3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("alpha"));
    let out = jumpflow(&["run", "--config", "/nonexistent/jumpflow.conf"]);
    assert_eq!(code(&out), 2);
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "n = 16\nhorizon = 1 1/s\n").unwrap();
    let out = jumpflow(&["run", "--config", conf.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("horizon"));
}

#[test]
fn constants_for_another_grid_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    let out = jumpflow(&["run", "--n", "32", "--constants", &c]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("calibrated for n = 16"));
}

#[test]
fn taylor_green_run_decays_and_reaudits() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    let conf = dir.path().join("tg.conf");
    let outdir = dir.path().join("tg");
    std::fs::write(
        &conf,
        format!(
            "n = 16\nhorizon = 0.5 s\nlambda = 0 1/s\nu0 = taylor-green\nstride = 100\nconstants = {c}\noutput = {}\n",
            outdir.display()
        ),
    )
    .unwrap();
    let out = jumpflow(&["run", "--config", conf.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["config.txt", "jumps.json", "trajectory.csv", "report.json", "manifest.json"] {
        assert!(outdir.join(f).is_file(), "{f} missing");
    }
    assert!(outdir.join("snapshots/u_000500.jfld").is_file());
    let traj = Trajectory::from_csv(&std::fs::read_to_string(outdir.join("trajectory.csv")).unwrap())
        .unwrap();
    let u0 = traj.rows[0].u_l2;
    for r in &traj.rows {
        let exact = (-2.0 * r.t).exp() * u0;
        assert!((r.u_l2 - exact).abs() <= 1e-3 * exact);
    }
    let traj_path = outdir.join("trajectory.csv");
    let out = jumpflow(&["audit", traj_path.to_str().unwrap(), "--n", "16", "--constants", &c]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn audit_rejects_malformed_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,u\n0,1\n").unwrap();
    let out = jumpflow(&["audit", bad.to_str().unwrap(), "--n", "16", "--constants", &c]);
    assert_eq!(code(&out), 2);
}

#[test]
fn audit_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    // ||Y|| grows from zero with no source term
    let csv = "t,u_l2,u_l4,grad_y_l2,y_l2,z_l4,residual\n\
               0e0,1e0,1e0,0e0,0e0,0e0,0e0\n\
               1e-1,1e0,1e0,1e0,5e0,0e0,0e0\n\
               2e-1,1e0,1e0,1e0,9e0,0e0,0e0\n";
    let path = dir.path().join("grow.csv");
    std::fs::write(&path, csv).unwrap();
    let out = jumpflow(&["audit", path.to_str().unwrap(), "--n", "16", "--constants", &c]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn theory_policy_with_coarse_step_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    let outdir = dir.path().join("out");
    let out = jumpflow(&[
        "run",
        "--n",
        "16",
        "--horizon",
        "0.1",
        "--policy",
        "theory",
        "--constants",
        &c,
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("seed 0x"));
}

#[test]
fn degenerate_ensemble_has_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let c = calibrate_small(dir.path());
    let outdir = dir.path().join("ens");
    let out = jumpflow(&[
        "ensemble",
        "--n",
        "16",
        "--horizon",
        "0.1",
        "--lambda",
        "0",
        "--u0",
        "taylor-green",
        "--n-paths",
        "2",
        "--constants",
        &c,
        "--output",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(outdir.join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(report["n_paths"], 2);
    assert_eq!(report["u_l4l4_ci95"], 0.0);
    assert_eq!(report["audit_pass_rate"], 1.0);
    let csv = std::fs::read_to_string(outdir.join("ensemble.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
