use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use wassineq::SuiteReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wassineq"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gaussian_config_passes_with_an_equality_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("gaussian_lsi.toml");
    let o = run(&["verify", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("gaussian_lsi.summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,lhs,rhs,slack,scale,pass,equality_case,reason"));
    let row = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0].starts_with("check_boltzmann_lsi") && f[0].ends_with(":gross_lsi"))
        .expect("gross_lsi row");
    assert_eq!((row[5], row[6]), ("true", "true"));
    let json = std::fs::read_to_string(dir.path().join("gaussian_lsi.report.json")).unwrap();
    let report: SuiteReport = serde_json::from_str(&json).unwrap();
    assert!(report.all_pass());
    assert!(dir.path().join("gaussian_lsi.meta.json").exists());
}

#[test]
fn unknown_checker_is_a_usage_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\ngrid = { a = -5.0, b = 5.0, n = 64 }\n\n[[suite]]\nchecker = \"frobnicate\"\n").unwrap();
    let o = run(&["verify", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("suite[0].checker") && err.contains("frobnicate"), "{err}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\ngrid = { a = -5.0, b = 5.0, n = 64 }\nbogus = 1\n").unwrap();
    let o = run(&["verify", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn failing_checks_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fail.toml");
    // V = x^4 has no positive convexity modulus at the origin
    std::fs::write(
        &path,
        "name = \"fail\"\ngrid = { a = -5.0, b = 5.0, n = 257 }\npotential = { v = \"x^4\", lambda = 1.0 }\n\n[[suite]]\nchecker = \"check_poincare\"\nf = \"x\"\n",
    )
    .unwrap();
    let o = run(&["verify", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let cfg = config("gaussian_lsi.toml");
    let mut outputs = vec![];
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let o = bin()
            .env("WASSINEQ_THREADS", threads)
            .args(["verify", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        outputs.push((
            std::fs::read(dir.path().join("gaussian_lsi.report.json")).unwrap(),
            std::fs::read(dir.path().join("gaussian_lsi.summary.csv")).unwrap(),
        ));
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn list_checkers_prints_the_registry() {
    let o = run(&["list-checkers"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().count() >= 12);
    assert!(out.lines().any(|l| l.starts_with("check_master ")));
}

#[test]
fn constants_match_closed_forms() {
    let o = run(&["constants", "--p", "2", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let pi = std::f64::consts::PI;
    let e = std::f64::consts::E;
    assert!((v["q"].as_f64().unwrap() - 2.0).abs() < 1e-15);
    // C_2 in dimension 3 is 2/(3 pi e)
    assert!((v["c_p"].as_f64().unwrap() - 2.0 / (3.0 * pi * e)).abs() < 1e-12);
    // sigma_c = int exp(-|x|^2) over R^3
    assert!((v["sigma_c"].as_f64().unwrap() - pi.powf(1.5)).abs() < 1e-10);
    // Aubin-Talenti: (3 pi)^(-1/2) (Gamma(3) / Gamma(3/2))^(1/3)
    let talenti = (3.0 * pi).powf(-0.5) * (4.0 / pi.sqrt()).powf(1.0 / 3.0);
    let c_pn = v["c_pn"].as_f64().unwrap();
    assert!((c_pn - talenti).abs() < 1e-4 * talenti, "{c_pn} vs {talenti}");

    let o = run(&["constants", "--p", "3", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["c_pn"].is_null());

    assert_eq!(run(&["constants", "--p", "1", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn flow_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ou.toml");
    std::fs::write(
        &path,
        "name = \"ou\"\ngrid = { a = -10.0, b = 10.0, n = 201 }\npotential = { v = \"x^2/2\", lambda = 1.0 }\nflow = { t_end = 1.0, sample_every = 50 }\n",
    )
    .unwrap();
    let o = run(&["flow", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("ou.flow.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,H,I2,W2,b,mass_err"));
    assert!(csv.lines().count() > 3);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ou.flow.json")).unwrap()).unwrap();
    assert!(v["dissipation"]["pass"].as_bool().unwrap());
}
