use std::fs;
use std::path::Path;
use std::process::Command;

use minimax_fold::harness::load_certificate;
use minimax_fold::mesh_fem::build_mesh;
use minimax_fold::minimax::verify_certificate;
use minimax_fold::model::{builtin_problem, Discretization};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minimax-fold"))
}

fn run_in(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = bin()
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("MF_THREADS", "2")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn solve_produces_valid_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_in(dir.path(), &["solve", "--problem", "scalar_power", "--q", "0.5", "--gamma", "2", "--n", "64"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("VALID"), "{text}");
    let c = load_certificate(&dir.path().join("certificate.json")).unwrap();
    assert!(c.certificate.valid && c.validity.valid);
    assert_eq!(c.n, 64);
}

#[test]
fn certificate_round_trip_reproduces_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_in(dir.path(), &["solve", "--problem", "cooperative_product", "--n", "16"]);
    assert_eq!(code, 0, "{text}");
    let c = load_certificate(&dir.path().join("certificate.json")).unwrap();
    let spec = builtin_problem(&c.problem, &c.params).unwrap();
    let d = Discretization::new(spec, build_mesh(c.n, c.grading).unwrap()).unwrap();
    let r = verify_certificate(&d, &c.certificate, c.solver.cert_tol);
    let pairs = [
        (r.primal, c.validity.primal),
        (r.adjoint, c.validity.adjoint),
        (r.stationarity, c.validity.stationarity),
        (r.complementarity, c.validity.complementarity),
        (r.primal, c.certificate.primal_residual),
    ];
    for (a, b) in pairs {
        assert!((a - b).abs() <= 1e-14, "{a} vs {b}");
    }
    assert_eq!(r.valid, c.validity.valid);
}

#[test]
fn check_reports_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_in(dir.path(), &["check", "--problem", "cooperative_product", "--n", "8,16,32"]);
    assert_eq!(code, 0, "{text}");
    assert!(dir.path().join("hypotheses.json").exists());
    assert!(dir.path().join("table.csv").exists());
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"problem\": ").unwrap();
    let out = dir.path().join("out");
    let (code, _) = run_in(&out, &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn single_size_refinement_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, text) = run_in(&out, &["refine", "--n", "16"]);
    assert_eq!(code, 2, "{text}");
    assert!(!out.exists());
}

#[test]
fn strict_mode_fails_on_violated_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run_in(dir.path(), &["solve", "--problem", "linear_diagnostic", "--n", "8", "--strict"]);
    assert_eq!(code, 4, "{text}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["refine", "--problem", "scalar_power", "--n", "8,16,32", "--seed", "3"];
    assert_eq!(run_in(a.path(), &args).0, 0);
    assert_eq!(run_in(b.path(), &args).0, 0);
    for f in ["certificate.json", "table.csv", "plotdata/convergence.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}
