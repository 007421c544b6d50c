use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stochvar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochvar"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn ns_verify_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochvar(dir.path(), &["--out", "r"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/ns-verify.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], true);
    assert_eq!(json["config"]["ns.tol.linf"], "1e-8");
    let names: Vec<&str> = json["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(
        names,
        ["taylor-green-linf", "momentum-residual", "divergence", "energy-balance", "momentum-drift"]
    );
    let csv = fs::read_to_string(dir.path().join("r/ns-verify.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1002);
    assert!(dir.path().join("r/ns-verify.meta.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["--experiment", "criticality", "--replicas", "0"][..],
        &["--set", "gird=32"],
        &["--experiment", "turbulence"],
        &["--experiment", "criticality", "--epsilon-ladder", "0.01,0.02"],
        &["--symmetry", "rotation"],
        &["--no-such-flag"],
    ] {
        let o = stochvar(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn failing_check_exits_1_and_lists_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochvar(dir.path(), &["--set", "ns.tol.energy=1e-30", "--set", "t_final=0.01"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("failed: energy-balance"));
}

#[test]
fn config_file_and_flags_compose() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "experiment = ns-verify\nt_final = 0.05\ngrid = 16\n").unwrap();
    let o = stochvar(
        dir.path(),
        &["--config", "run.cfg", "--dt", "0.01", "--report", "series/tg.csv", "--save-trajectory", "traj"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("series/tg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.path().join("traj/index.txt").exists());
    let traj = stochvar::ns::NSTrajectory::load(dir.path().join("traj")).unwrap();
    assert_eq!(traj.len(), 6);
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--experiment", "criticality", "--set", "grid=16", "--set", "t_final=0.1", "--set", "particles=4",
        "--replicas", "4", "--perturbation-modes", "1,0", "--out", "r",
    ];
    let mut bodies = Vec::new();
    for threads in ["1", "4", "1"] {
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        let o = stochvar(dir.path(), &a);
        assert!(code(&o) <= 1, "{}", String::from_utf8_lossy(&o.stderr));
        bodies.push((
            fs::read(dir.path().join("r/criticality.json")).unwrap(),
            fs::read(dir.path().join("r/criticality.csv")).unwrap(),
        ));
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0], bodies[2]);
}

#[test]
fn noether_non_symmetry_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("shear.sym"),
        "label = shear\neta.envelope = bump\neta1 = sin 0 1 1\n",
    )
    .unwrap();
    let common = [
        "--experiment", "noether", "--symmetry", "custom", "shear.sym", "--set", "grid=16", "--set", "t_final=0.1",
        "--set", "particles=8", "--replicas", "4", "--set", "noether.sample-every=20", "--set",
        "noether.probe-samples=0", "--out", "r",
    ];
    let o = stochvar(dir.path(), &common);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let json = fs::read_to_string(dir.path().join("r/noether.json")).unwrap();
    assert!(json.contains("residual not computed"));
    assert!(!json.contains("noether-residual"));

    let mut forced = common.to_vec();
    forced.push("--force");
    let o = stochvar(dir.path(), &forced);
    assert_eq!(code(&o), 1);
    let json = fs::read_to_string(dir.path().join("r/noether.json")).unwrap();
    assert!(json.contains("noether-residual"));
    let csv = fs::read_to_string(dir.path().join("r/noether.csv")).unwrap();
    assert!(csv.starts_with("t,r(t),Q(t),defect,stderr\n"));
}

#[test]
fn spde_converge_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochvar(
        dir.path(),
        &["--experiment", "spde-converge", "--set", "grid=8", "--replicas", "8", "--dt-ladder", "0.004,0.002", "--out", "r"],
    );
    assert!(code(&o) <= 1);
    let csv = fs::read_to_string(dir.path().join("r/spde-converge.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dt,mean error,stderr,fitted order"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn printed_defaults_are_a_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochvar(dir.path(), &["--print-defaults"]);
    assert_eq!(code(&o), 0);
    fs::write(dir.path().join("d.cfg"), &o.stdout).unwrap();
    let cfg = stochvar_cli::Config::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.effective(), stochvar_cli::Config::new().effective());
}
