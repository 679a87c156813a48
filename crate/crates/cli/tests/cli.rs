use std::process::{Command, Output};

fn spinchern(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinchern"))
        .args(args)
        .env("SPINCHERN_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sweep_emits_csv() {
    let o = spinchern(&[
        "sweep", "--n", "2", "--j-min", "-2", "--j-max", "2", "--method", "spectral",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next(),
        Some("j,f_phitheta,chern,gap_at_pole,method,converged")
    );
    assert_eq!(lines.count(), 81);
    assert!(out.contains(",spectral,false"));
}

#[test]
fn sweep_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("n3.csv");
    let o = spinchern(&[
        "sweep",
        "--n",
        "3",
        "--method",
        "spectral",
        "--output",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(csv.exists() && csv.with_extension("json").exists());
    assert!(stdout(&o).contains("1.500000"));
}

#[test]
fn sweep_from_config_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"spec":{"n_spins":2,"coupling_j":0.0},"method":"dynamical","j_values":[-1.0,1.0]}"#,
    )
    .unwrap();
    let o = spinchern(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "lattice",
        "--table",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("lattice") && !out.contains("dynamical"));
}

#[test]
fn curvature_at_crossing_is_degenerate() {
    let o = spinchern(&[
        "curvature",
        "--n",
        "2",
        "--j",
        "-0.5",
        "--method",
        "spectral",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degenerate"), "{}", stderr(&o));
}

#[test]
fn curvature_dynamical() {
    let o = spinchern(&["curvature", "--n", "2", "--j", "1", "--method", "dynamical"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("f_phitheta"));
}

#[test]
fn equal_couplings_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(
        &m,
        r#"{"labels":["H","C","F"],"shifts_hz":[0,0,0],"couplings_hz":[[0,100,20],[100,0,-50],[20,-50,0]]}"#,
    )
    .unwrap();
    let o = spinchern(&[
        "pulse",
        "compile",
        "--molecule",
        m.to_str().unwrap(),
        "--n",
        "3",
        "--equal-couplings",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("degenerate couplings"),
        "{}",
        stderr(&o)
    );

    let program = dir.path().join("p.json");
    let o = spinchern(&[
        "pulse",
        "compile",
        "--molecule",
        m.to_str().unwrap(),
        "--output",
        program.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = spinchern(&[
        "pulse",
        "verify",
        "--molecule",
        m.to_str().unwrap(),
        "--program",
        program.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("fidelity 1.0000000000")
            || stdout(&o).contains("fidelity 0.9999999999"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn crossings_and_spectrum() {
    let o = spinchern(&["crossings", "--n", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = spinchern(&[
        "spectrum", "--n", "2", "--j-min", "-1", "--j-max", "1", "--j-step", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 7);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(spinchern(&["sweep"]).status.code(), Some(2));
    assert_eq!(spinchern(&["curvature", "--n", "2"]).status.code(), Some(2));
    assert_eq!(spinchern(&["bogus"]).status.code(), Some(2));
    assert_eq!(
        spinchern(&["curvature", "--n", "2", "--j", "1", "--method", "exact"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(spinchern(&["--help"]).status.code(), Some(0));
}

#[test]
fn robustness_reports() {
    let o = spinchern(&["robustness", "--trials", "2", "--steps", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("min period-averaged fidelity"));
}
