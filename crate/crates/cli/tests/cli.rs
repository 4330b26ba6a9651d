use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn maxcorr(args: &[&str]) -> Output {
    maxcorr_env(args, None)
}

fn maxcorr_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_maxcorr"));
    cmd.args(args).env_remove("MAXCORR_SEED");
    if let Some(s) = seed {
        cmd.env("MAXCORR_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or_else(|| panic!("missing `{key}` in {v}"))
}

#[test]
fn gaussian_identity_and_diagonal() {
    let dir = TempDir::new().unwrap();
    let i2 = write(&dir, "i2.csv", "1,0\n0,1\n");
    let d = write(&dir, "d.csv", "1,0\n0,4\n");
    let out = maxcorr(&["--no-meta", "gaussian", "--sigma-u", s(&i2), "--sigma-x", s(&i2)]);
    assert_eq!(code(&out), 0);
    assert!((f(&json(&out), "rho") - 2.0).abs() < 1e-12);
    let out = maxcorr(&["--no-meta", "gaussian", "--sigma-u", s(&i2), "--sigma-x", s(&d)]);
    let v = json(&out);
    assert!((f(&v, "rho") - 3.0).abs() < 1e-12);
    assert!(f(&v, "a_x_residual") < 1e-12);
}

#[test]
fn gaussian_cross_covariance() {
    let dir = TempDir::new().unwrap();
    let i2 = write(&dir, "i2.csv", "1,0\n0,1\n");
    let d = write(&dir, "d.csv", "1,0\n0,4\n");
    let out = maxcorr(&[
        "--no-meta", "gaussian", "--sigma-u", s(&i2), "--sigma-x", s(&i2), "--sigma-y", s(&d), "--cross",
    ]);
    assert_eq!(code(&out), 0);
    let cross = json(&out)["cross_cov"].clone();
    // X ~ U, Y = diag(1,2) U
    let expected = [[1.0, 0.0], [0.0, 2.0]];
    for (i, row) in expected.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            assert!((cross[i][j].as_f64().unwrap() - e).abs() < 1e-10);
        }
    }
    // --cross needs --sigma-y: a usage error
    let out = maxcorr(&["gaussian", "--sigma-u", s(&i2), "--sigma-x", s(&i2), "--cross"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn gaussian_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let i2 = write(&dir, "i2.csv", "1,0\n0,1\n");
    let bad = write(&dir, "bad.csv", "1,2\n3\n");
    let zero = write(&dir, "zero.csv", "0,0\n0,0\n");
    let out = maxcorr(&["gaussian", "--sigma-u", s(&i2), "--sigma-x", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    let out = maxcorr(&["gaussian", "--sigma-u", s(&zero), "--sigma-x", s(&i2)]);
    assert_eq!(code(&out), 3);
    let out = maxcorr(&["gaussian", "--sigma-u", "/nonexistent/x.csv", "--sigma-x", s(&i2)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_two_atoms_on_the_line() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x\n0\n1\n");
    let trace = dir.path().join("trace.csv");
    let part = dir.path().join("part.csv");
    let out = maxcorr(&[
        "--no-meta", "solve", "--target", s(&t), "--dump-trace", s(&trace), "--dump-partition", s(&part),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["converged"], true);
    assert_eq!(v["baseline"], "uniform-cube");
    let w = v["weights"].as_array().unwrap();
    let gap = (w[1].as_f64().unwrap() - w[0].as_f64().unwrap()).abs();
    assert!((gap - 0.5).abs() < 0.02, "gap {gap}");
    assert!((f(&v, "rho") - 0.375).abs() < 0.01);

    let trace = std::fs::read_to_string(trace).unwrap();
    assert!(trace.starts_with("iter,objective,residual,step\n"));
    assert!(trace.lines().count() >= 2);
    let part = std::fs::read_to_string(part).unwrap();
    let mut lines = part.lines();
    assert_eq!(lines.next(), Some("u1,cell"));
    assert_eq!(lines.count(), 100_000);
}

#[test]
fn solve_seven_atoms_on_the_square() {
    let dir = TempDir::new().unwrap();
    let t = write(
        &dir,
        "t.csv",
        "x,y\n0.1,0.2\n0.8,0.1\n0.5,0.5\n0.2,0.9\n0.9,0.8\n0.4,0.3\n0.6,0.7\n",
    );
    let out = maxcorr(&["--no-meta", "solve", "--baseline", "cube", "--target", s(&t)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["converged"], true);
    let masses = v["cell_stats"]["masses"].as_array().unwrap();
    assert_eq!(masses.len(), 7);
    for m in masses {
        assert!((m.as_f64().unwrap() - 1.0 / 7.0).abs() <= 1e-3 + 1e-12);
    }
}

#[test]
fn solve_validation_and_non_convergence() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x\n0\n1\n");
    let out = maxcorr(&["solve", "--target", s(&t), "--samples", "10"]);
    assert_eq!(code(&out), 2);
    let out = maxcorr(&["solve", "--target", s(&t), "--step", "sideways"]);
    assert_eq!(code(&out), 2);
    let out = maxcorr(&["solve", "--baseline", "bernoulli", "--target", s(&t)]);
    assert_eq!(code(&out), 2);
    let out = maxcorr(&["solve", "--target", s(&t), "--alpha", "0.5"]);
    assert_eq!(code(&out), 2);

    let out = maxcorr(&["--no-meta", "solve", "--target", s(&t), "--max-iters", "1"]);
    assert_eq!(code(&out), 4);
    let v = json(&out);
    assert_eq!(v["converged"], false);
    assert_eq!(v["iterations"], 1);
}

#[test]
fn solve_exact_baselines() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x,y\n1,1\n0,0\n");
    let out = maxcorr(&["--no-meta", "solve", "--baseline", "bernoulli", "--alpha", "0.5", "--target", s(&t)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["method"], "sum-quantile");
    assert!((f(&v, "rho") - 2.0).abs() < 1e-12);

    let src = write(&dir, "src.csv", "x,y\n0,1\n2,0\n");
    let out = maxcorr(&["--no-meta", "solve", "--baseline", "file", "--baseline-file", s(&src), "--target", s(&t)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["method"], "exhaustive");
    assert_eq!(v["coupling"]["entries"].as_array().unwrap().len(), 2);
    // best pairing sends (2,0) to (1,1)
    assert!((f(&v, "rho") - 1.0).abs() < 1e-12);
}

#[test]
fn solve_config_file_and_seed_precedence() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x\n0\n1\n");
    let cfg = write(&dir, "cfg.json", r#"{"seed": 5, "max_iters": 3, "sample_count": 2000}"#);
    let seed_of = |out: &Output| json(out)["seed"].as_u64().unwrap();

    let out = maxcorr_env(&["--no-meta", "solve", "--target", s(&t), "--samples", "2000"], Some("9"));
    assert_eq!(seed_of(&out), 9);
    let out = maxcorr_env(&["--no-meta", "solve", "--target", s(&t), "--config", s(&cfg)], Some("9"));
    assert_eq!(seed_of(&out), 5);
    assert_eq!(json(&out)["sample_count"], 2000);
    let out = maxcorr_env(
        &["--no-meta", "solve", "--target", s(&t), "--config", s(&cfg), "--seed", "7"],
        Some("9"),
    );
    assert_eq!(seed_of(&out), 7);

    let bad = write(&dir, "bad.json", r#"{"bogus": 1}"#);
    assert_eq!(code(&maxcorr(&["solve", "--target", s(&t), "--config", s(&bad)])), 2);
    let out = maxcorr_env(&["solve", "--target", s(&t)], Some("not-a-number"));
    assert_eq!(code(&out), 2);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x,y\n0.1,0.2\n0.8,0.1\n0.5,0.5\n");
    let args = ["--no-meta", "solve", "--target", s(&t), "--samples", "5000", "--seed", "3"];
    let a = maxcorr(&args);
    let b = maxcorr(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let args = ["--no-meta", "check", "--suite", "oracle", "--seed", "4", "--trials", "2"];
    assert_eq!(maxcorr(&args).stdout, maxcorr(&args).stdout);
}

#[test]
fn meta_block_is_optional() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x,y\n1,1\n0,0\n");
    let v = json(&maxcorr(&["es", "--target", s(&t), "--alpha", "0.5"]));
    assert_eq!(v["meta"]["version"], env!("CARGO_PKG_VERSION"));
    assert!(v["meta"]["elapsed_seconds"].is_number());
    let v = json(&maxcorr(&["--no-meta", "es", "--target", s(&t), "--alpha", "0.5"]));
    assert!(v.get("meta").is_none());
}

#[test]
fn expected_shortfall() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x,y\n1,1\n0,0\n");
    let v = json(&maxcorr(&["--no-meta", "es", "--target", s(&t), "--alpha", "0.5"]));
    assert_eq!(f(&v, "rho"), 1.0);
    assert_eq!(f(&v, "cutoff_c"), 2.0);
    assert_eq!(f(&v, "boundary_fraction"), 1.0);

    let t = write(&dir, "w.csv", "x,y,weight\n1,2,0.2\n-1,0.5,0.3\n3,-4,0.5\n");
    let v = json(&maxcorr(&["--no-meta", "es", "--target", s(&t), "--alpha", "0.999999999999"]));
    let mean = 0.2 * 3.0 + 0.3 * -0.5 + 0.5 * -1.0;
    assert!((f(&v, "rho") - mean).abs() < 1e-10);

    assert_eq!(code(&maxcorr(&["es", "--target", s(&t), "--alpha", "0"])), 2);
}

#[test]
fn check_suites_and_failure_hook() {
    let out = maxcorr(&["--no-meta", "check", "--suite", "gaussian", "--seed", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    for c in v["checks"].as_array().unwrap() {
        assert!(c["gap"].is_number() && c["tolerance"].is_number());
    }

    let out = maxcorr(&["--no-meta", "check", "--suite", "oracle", "--trials", "20"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| c["name"].as_str().unwrap().starts_with("exhaustive_vs_assignment")));

    let out = maxcorr(&["--no-meta", "check", "--suite", "axioms", "--tolerance-scale", "1e-30"]);
    assert_eq!(code(&out), 5);
    assert_eq!(json(&out)["passed"], false);

    assert_eq!(code(&maxcorr(&["check", "--suite", "nonsense"])), 2);
}

#[test]
fn convex_assign_and_probe() {
    let dir = TempDir::new().unwrap();
    let t = write(&dir, "t.csv", "x\n0\n1\n");
    let sc = write(
        &dir,
        "sc.json",
        r#"[{"baseline": "cube", "penalty": 0.1}, {"baseline": "bernoulli", "alpha": 0.5, "penalty": 0.6}]"#,
    );
    let out = maxcorr(&["--no-meta", "convex", "--target", s(&t), "--scenarios", s(&sc), "--samples", "20000"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["scenarios"].as_array().unwrap().len(), 2);
    // cube: 0.375 - 0.1 against bernoulli: 1 - 0.6
    assert_eq!(v["attaining_scenario"], 1);
    assert!((f(&v, "value") - 0.4).abs() < 1e-12);

    let a = write(&dir, "a.csv", "x\n0\n1\n2\n");
    let b = write(&dir, "b.csv", "x\n5\n1\n3\n");
    let v = json(&maxcorr(&["--no-meta", "assign", "--source", s(&a), "--target", s(&b)]));
    // sorted pairing: (0·1 + 1·3 + 2·5) / 3
    assert!((f(&v, "value") - 13.0 / 3.0).abs() < 1e-12);

    let out = maxcorr(&["--no-meta", "probe", "--source", s(&a), "--a", s(&a), "--b", s(&b)]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(f(&v, "best_found") <= f(&v, "sum_of_parts") + 1e-10);
    assert_eq!(v["exhaustive"], true);
}
