use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use obstacle_lab::cli::{run, BasePoint, ExperimentConfig, RunManifest, Stage};
use obstacle_lab::fields::ProblemConfig;
use obstacle_lab::Error;
use proptest::prelude::*;

fn uniqueness() -> ProblemConfig {
    ProblemConfig::identity(2).with_penalties("1", "2").with_dirichlet("x1")
}

fn config(out: &Path, pipeline: Vec<Stage>) -> ExperimentConfig {
    ExperimentConfig::new(uniqueness(), 33, pipeline, out)
}

fn files_in(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn solve_stage_writes_solution() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&config(dir.path(), vec![Stage::Solve])).unwrap();
    assert!(m.passed, "{:?}", m.checks);
    let listed: BTreeSet<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    assert!(listed.contains("solve.json") && listed.contains("solution.csv"));
    assert!(!listed.contains("frequency.csv"));
}

#[test]
fn manifest_lists_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), vec![Stage::Solve, Stage::Diagnose, Stage::Blowup, Stage::Strata]);
    let m = run(&cfg).unwrap();
    assert!(m.passed, "{:?} {:?}", m.stages, m.checks);
    let listed: BTreeSet<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    assert_eq!(listed, files_in(dir.path()));
    assert!(listed.contains("frequency.csv"));
    for a in m.artifacts.iter().filter(|a| a.path != "manifest.json") {
        assert_eq!(a.sha256.as_ref().map(|s| s.len()), Some(64), "{}", a.path);
    }
    let written: RunManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(written, m);
    assert_eq!(written.config_hash, cfg.hash());
}

#[test]
fn artifacts_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let stages = vec![Stage::Solve, Stage::Diagnose, Stage::Strata];
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    one.install(|| run(&config(a.path(), stages.clone()))).unwrap();
    four.install(|| run(&config(b.path(), stages.clone()))).unwrap();
    for name in ["solution.csv", "frequency.csv", "free_boundary.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between thread counts");
    }
}

#[test]
fn malformed_expression_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), vec![Stage::Solve]);
    cfg.problem.k_minus = "2 *".into();
    match run(&cfg) {
        Err(Error::Parse { field, .. }) => assert_eq!(field, "problem.k_minus"),
        other => panic!("{other:?}"),
    }
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path(), vec![Stage::Solve]);
    let mut c = base.clone();
    c.pipeline = vec![Stage::Diagnose];
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let mut c = base.clone();
    c.grid.dim = 3;
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.base_point = BasePoint::Point(vec![0.1]);
    assert!(c.validate().is_err());
    let mut c = base.clone();
    c.schema_version = "0".into();
    assert!(c.validate().is_err());
    let mut json: serde_json::Value = serde_json::from_str(&base.to_json()).unwrap();
    json["surprise"] = serde_json::json!(1);
    assert!(ExperimentConfig::from_json(&json.to_string()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        kp in 0.0..10.0f64,
        rho in 0.05..0.9f64,
        tol in 1e-14..1e-6f64,
        half in 4usize..100,
        seeds in any::<u64>(),
        x1 in -0.9..0.9f64,
    ) {
        let mut cfg = config(Path::new("out"), vec![Stage::Solve, Stage::Diagnose]);
        cfg.problem.k_plus = format!("{kp}");
        cfg.grid.cells_per_axis = 2 * half + 1;
        cfg.ladder.rho_max = rho;
        cfg.solver.tol = tol;
        cfg.seeds = seeds;
        cfg.base_point = BasePoint::Point(vec![x1, 0.0]);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_obstacle-lab"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    let out = dir.path().join("run");
    fs::write(&cfg_path, config(&out, vec![Stage::Solve, Stage::Diagnose]).to_json()).unwrap();

    let ok = bin().args(["run", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    assert!(out.join("manifest.json").exists());

    let mut bad = config(&out, vec![Stage::Solve]);
    bad.problem.dirichlet = "x1 +".into();
    fs::write(&cfg_path, bad.to_json()).unwrap();
    let err = bin().args(["solve", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("problem.dirichlet"));

    let missing = bin().arg("solve").output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
