use std::fs;
use std::path::Path;
use std::process::Command;

use wavemap_core::io::{load_field, parse_sidecar};

fn wavemap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavemap"))
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn fixed_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = wavemap()
        .args([
            "run",
            "--grid",
            "16",
            "--tau",
            "0.0078125",
            "--tend",
            "0.05",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        header(&out.join("estimator.csv")),
        "t_j,tau_j,alpha_hat,delta_hat,int_alpha,int_delta,B_j"
    );
    assert!(!out.join("controller.csv").exists());

    // eight default snapshots; the dump round-trips to the sidecar's state
    let snaps = out.join("snapshots");
    for k in 0..8 {
        assert!(
            snaps.join(format!("snap_{k:02}_u.wmf")).exists(),
            "snapshot {k}"
        );
    }
    let (g, u) = load_field(&snaps.join("snap_00_u.wmf")).unwrap();
    assert_eq!(g.cells(), 16);
    assert!((u[0][2] + 1.0).abs() < 1e-15);
    let (t, _) = parse_sidecar(
        fs::read_to_string(snaps.join("snap_07.txt"))
            .unwrap()
            .trim(),
    )
    .unwrap();
    assert!(t >= 0.05);
    assert_eq!(header(&snaps.join("snap_03_u.csv")), "x,y,u1,u2,u3");
}

#[test]
fn adaptive_run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ad");
    let status = wavemap()
        .args([
            "run",
            "--grid",
            "8",
            "--mode",
            "adaptive",
            "--strategy",
            "updated",
        ])
        .args(["--tol0", "1e-3", "--tend", "0.02"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        header(&out.join("controller.csv")),
        "t_j,tau_j,decision,current_tol,density"
    );
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = wavemap()
            .args([
                "run", "--grid", "8", "--mode", "adaptive", "--tol0", "1e-4", "--tend", "0.01",
            ])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        files.push((
            fs::read(out.join("estimator.csv")).unwrap(),
            fs::read(out.join("controller.csv")).unwrap(),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\ngrid = 8\ntau = 0.01  # step\ntend = 0.02\nsnapshots = none\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let status = wavemap()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--tau", "0.005"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows = fs::read_to_string(out.join("estimator.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 4);
    assert!(fs::read_dir(out.join("snapshots"))
        .unwrap()
        .next()
        .is_none());
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    let st = wavemap()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
    let st = wavemap().args(["run", "--tend", "-1"]).status().unwrap();
    assert_eq!(st.code(), Some(3));
    let st = wavemap().args(["run", "--tend=-1"]).status().unwrap();
    assert_eq!(st.code(), Some(3));
    let st = wavemap()
        .args(["run", "--mode", "sideways"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn step_floor_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("floor.cfg");
    // a tolerance no step can meet, with almost no room to shrink
    fs::write(
        &cfg,
        "grid = 8\nmode = adaptive\nstrategy = equidistribute\ntol0 = 1e-300\ntau_min = 0.001\ntau_max = 0.002\ntau_init = 0.0015\ntend = 0.1\n",
    )
    .unwrap();
    let st = wavemap()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn residual_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let status = wavemap()
        .args([
            "run",
            "--grid",
            "8",
            "--tau",
            "0.01",
            "--tend",
            "0.03",
            "--dump-residuals",
            "0.015",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "r_u1",
        "r_u2",
        "r_u3",
        "r_w",
        "r_g",
        "grad_r_u",
        "grad_r_u_parts",
        "utilde",
        "wtilde",
    ] {
        let p = out.join("residuals").join(format!("{name}.csv"));
        assert_eq!(header(&p), "x,y,u1,u2,u3", "{name}");
        assert_eq!(fs::read_to_string(&p).unwrap().lines().count(), 1 + 81);
    }
    let (t, tau) = parse_sidecar(
        fs::read_to_string(out.join("residuals/sample.txt"))
            .unwrap()
            .trim(),
    )
    .unwrap();
    assert_eq!((t, tau), (0.015, 0.01));
}

#[test]
fn eoc_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let status = wavemap()
        .args([
            "eoc",
            "--grid",
            "8",
            "--tend",
            "0.05",
            "--taus",
            "0.0125,0.00625",
            "--tau-ref",
            "0.0015625",
        ])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("eoc.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,err_w,eoc_w,err_gu,eoc_gu");
    assert_eq!(lines.len(), 3);
    let eoc: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert!(eoc > 1.5 && eoc < 2.5, "{eoc}");
}
