use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hankel_nullspace::estimator::{Candidate, MomentPoint};
use hankel_nullspace::io::write_candidate;
use hankel_nullspace::validate::true_nullspace;
use hankel_nullspace::StateSpace;
use nalgebra::DVector;
use tempfile::TempDir;

const SMALL: &str = r#"{
  "system": "benchmark",
  "Nt": 200, "N": 30, "L": 2,
  "x0": {"policy": "random-bounded", "half_width": 1.0},
  "noise": {
    "input":  {"family": "gaussian", "mean": 1.0, "std": 2.0},
    "output": {"family": "gaussian", "mean": 1.0, "std": 2.0}
  },
  "grid": {"mode": "identical",
           "m1": {"lo": 0.0, "hi": 1.5, "points": 7},
           "m2": {"lo": 0.0, "hi": 7.0, "points": 8}},
  "eps_sigma": 1e-3,
  "seed": 11
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hankel-nullspace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn setup() -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("config.json");
    fs::write(&cfg, SMALL).unwrap();
    (tmp, cfg)
}

#[test]
fn generate_is_deterministic_across_worker_counts() {
    let (tmp, cfg) = setup();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["--workers", "1", "generate", "-c", s(&cfg), "-o", s(&a)])), 0);
    assert_eq!(code(&run(&["--workers", "4", "generate", "-c", s(&cfg), "-o", s(&b)])), 0);
    for f in ["clean.jsonl", "noisy.jsonl"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        let lines = String::from_utf8(x).unwrap().lines().count();
        assert_eq!(lines, 201);
    }
}

#[test]
fn single_experiment_smoke() {
    let (tmp, cfg) = setup();
    let out = tmp.path().join("one");
    assert_eq!(code(&run(&["generate", "-c", s(&cfg), "--nt", "1", "-o", s(&out)])), 0);
    let text = fs::read_to_string(out.join("noisy.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().next().unwrap().starts_with("{\"meta\":"));
}

#[test]
fn infeasible_config_fails_before_writing() {
    let (tmp, cfg) = setup();
    let out = tmp.path().join("never");
    let o = run(&["generate", "-c", s(&cfg), "--samples", "1", "--depth", "2", "-o", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
}

#[test]
fn recover_from_snapshot_reproduces_landscape() {
    let (tmp, cfg) = setup();
    let data = tmp.path().join("data");
    assert_eq!(code(&run(&["generate", "-c", s(&cfg), "-o", s(&data)])), 0);
    let noisy = data.join("noisy.jsonl");

    let r1 = tmp.path().join("r1");
    let o = run(&["recover", "-c", s(&cfg), "--data", s(&noisy), "-o", s(&r1)]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));

    let stats = tmp.path().join("stats.json");
    assert_eq!(code(&run(&["aggregate", "-c", s(&cfg), "--data", s(&noisy), "-o", s(&stats)])), 0);
    assert_eq!(fs::read(&stats).unwrap(), fs::read(r1.join("stats.json")).unwrap());

    let r2 = tmp.path().join("r2");
    let o2 = run(&["recover", "-c", s(&cfg), "--stats", s(&stats), "-o", s(&r2)]);
    assert_eq!(code(&o), code(&o2));
    let l1 = fs::read_to_string(r1.join("landscape.csv")).unwrap();
    assert_eq!(l1, fs::read_to_string(r2.join("landscape.csv")).unwrap());
    assert_eq!(l1.lines().next().unwrap(), "m1,m2,sigma_min,numerical_rank,admitted");
    assert_eq!(l1.lines().count(), 1 + 7 * 8);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r1.join("manifest.json")).unwrap()).unwrap();
    for phase in ["read", "aggregate", "grid_search"] {
        assert!(manifest["timings"][phase].as_f64().unwrap() >= 0.0, "{phase}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let (tmp, cfg) = setup();
    let a = tmp.path().join("a");
    assert_eq!(code(&run(&["generate", "-c", s(&cfg), "--seed", "99", "-o", s(&a)])), 0);
    let b = tmp.path().join("b");
    let manifest = a.join("manifest.json");
    assert_eq!(code(&run(&["generate", "-c", s(&manifest), "-o", s(&b)])), 0);
    assert_eq!(
        fs::read(a.join("noisy.jsonl")).unwrap(),
        fs::read(b.join("noisy.jsonl")).unwrap()
    );
    let ma: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    let mb: serde_json::Value =
        serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["config"]["seed"], 99);
}

#[test]
fn noiseless_data_recovers_the_origin() {
    let (tmp, cfg) = setup();
    let data = tmp.path().join("data");
    assert_eq!(code(&run(&["generate", "-c", s(&cfg), "-o", s(&data)])), 0);
    let out = tmp.path().join("rec");
    let o = run(&["recover", "-c", s(&cfg), "--data", s(&data.join("clean.jsonl")), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cand: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("candidate.json")).unwrap()).unwrap();
    assert_eq!(cand["m1"], 0.0);
    assert_eq!(cand["m2"], 0.0);
    assert_eq!(cand["nullspace"].as_array().unwrap().len(), 3);

    let val = tmp.path().join("val");
    let o = run(&["validate", "-c", s(&cfg), "--candidate", s(&out.join("candidate.json")), "-o", s(&val)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value =
        serde_json::from_slice(&fs::read(val.join("validation.json")).unwrap()).unwrap();
    assert!(rep["theta_max"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn no_candidate_has_its_own_exit_code() {
    let (tmp, cfg) = setup();
    let data = tmp.path().join("data");
    assert_eq!(code(&run(&["generate", "-c", s(&cfg), "-o", s(&data)])), 0);
    let out = tmp.path().join("rec");
    let o = run(&[
        "recover", "-c", s(&cfg), "--eps-sigma", "1e-300",
        "--data", s(&data.join("noisy.jsonl")), "-o", s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(out.join("landscape.csv").exists());
    assert!(!out.join("candidate.json").exists());
}

fn truth_candidate(path: &Path, seed: u64) {
    let truth = true_nullspace(&StateSpace::benchmark(), 2, seed).unwrap();
    let c = Candidate {
        point: MomentPoint::zero(),
        sigma_min: 0.0,
        singular_values: DVector::zeros(0),
        nullspace: truth,
    };
    write_candidate(&c, true, fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn validating_the_oracle_itself_gives_zero() {
    let (tmp, cfg) = setup();
    let cand = tmp.path().join("truth.json");
    truth_candidate(&cand, 11);
    let out = tmp.path().join("val");
    let o = run(&["validate", "-c", s(&cfg), "--candidate", s(&cand), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("validation.json")).unwrap()).unwrap();
    assert!(rep["theta_max"].as_f64().unwrap() < 1e-12);
    assert_eq!(rep["nullity"], 3);
}

#[test]
fn validate_rejects_wrong_dimension() {
    let (tmp, cfg) = setup();
    let cand = tmp.path().join("truth.json");
    truth_candidate(&cand, 11);
    let out = tmp.path().join("val");
    let o = run(&["validate", "-c", s(&cfg), "--depth", "3", "--candidate", s(&cand), "-o", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_input_is_an_io_error() {
    let (tmp, cfg) = setup();
    let o = run(&[
        "recover", "-c", s(&cfg), "--data", s(&tmp.path().join("absent.jsonl")),
        "-o", s(&tmp.path().join("x")),
    ]);
    assert_eq!(code(&o), 4);
}

#[test]
fn malformed_config_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"system": "benchmark", "Nt": -1}"#).unwrap();
    let o = run(&["generate", "-c", s(&cfg), "-o", s(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn sweep_shape() {
    let (tmp, cfg) = setup();
    let out = tmp.path().join("sweep");
    let o = run(&["sweep", "-c", s(&cfg), "--nt-list", "250,500,1000", "--seeds", "5", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(rows.lines().next().unwrap(), "Nt,seed,theta_max,admitted");
    assert_eq!(rows.lines().count(), 1 + 15);
    let summary = fs::read_to_string(out.join("convergence_summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "Nt,median_theta_max");
    assert_eq!(summary.lines().count(), 1 + 3);
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["sweep"]["Nt"], serde_json::json!([250, 500, 1000]));
}
