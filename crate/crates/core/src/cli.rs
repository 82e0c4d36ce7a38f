//! Experiment runner: a JSON config names the problem, the grid, the radius
//! ladder and a list of pipeline stages; [`run`] executes the stages in order,
//! writes CSV/JSON artifacts to the output directory and returns a manifest.
//!
//! # Config
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "problem": {
//!     "dim": 2, "a": [["1", "0"], ["0", "1"]],
//!     "k_plus": "1", "k_minus": "2", "obstacle": "0",
//!     "p": 2.0, "kappa": 2, "dirichlet": "x1"
//!   },
//!   "grid": {"dim": 2, "cells_per_axis": 65},
//!   "ladder": {"rho_max": 0.9, "rungs": null},
//!   "pipeline": ["solve", "diagnose"],
//!   "output_dir": "out",
//!   "seeds": 7
//! }
//! ```
//!
//! Optional keys: `problem.lipschitz_bound`, `solver` (`tol`, `max_iter`),
//! `base_point` (`"origin"`, `"free_boundary"` or `{"point": [x1, ..]}`) and
//! `convergence` (`cases`, `levels`).
//!
//! # Expression grammar
//!
//! Problem fields are expression strings over `x1..xn`:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'x1' | .. | 'xn'
//!         | ('exp' | 'log' | 'sin' | 'cos') '(' expr ')'
//!         | 'max' '(' expr ',' '0' ')'
//!         | '(' expr ')'
//! number := digits ('.' digits?)? (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x1^2` is
//! `-(x1^2)`. Whitespace is ignored between tokens.
//!
//! # Artifacts
//!
//! | stage | files |
//! |---|---|
//! | solve | `solve.json`, `solution.csv` |
//! | diagnose | `frequency.csv`, `frequency.json` |
//! | blowup | `tangent.json` |
//! | strata | `atlas.json`, `free_boundary.csv` |
//! | verify | `acceptance.csv`, `acceptance.json` |
//! | convergence | `convergence.csv`, `convergence.json` |
//!
//! plus `manifest.json`. CSV numbers carry 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blowup::{rescale, RescaleMode, TangentPolynomial};
use crate::diagnostics::{DiagnosticInput, RHO_MAX};
use crate::error::{Error, Result};
use crate::fields::{validate_spec, ProblemConfig, ProblemSpec, ScalarField};
use crate::freeboundary::{
    classify_all, dedupe, extract_contact_set, extract_free_boundary, stratify, ClassifyOptions, FreeBoundaryPoint,
    PointKind,
};
use crate::geometry::Grid;
use crate::pipeline::{convergence_study, diagnose, nearest_free_boundary_point, ConvergenceCase, Diagnosis};
use crate::solver::{solve, Initial, SolveResult, SolverOptions};
use crate::taylor::normalize_at;
use crate::verify::{csv_field, run_suite, solution_csv, SuiteOptions, WEAK_RESIDUAL_FACTOR};
use crate::Point;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Solve,
    Diagnose,
    Blowup,
    Strata,
    Verify,
    Convergence,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Diagnose => "diagnose",
            Stage::Blowup => "blowup",
            Stage::Strata => "strata",
            Stage::Verify => "verify",
            Stage::Convergence => "convergence",
        }
    }

    fn needs_solution(self) -> bool {
        matches!(self, Stage::Diagnose | Stage::Blowup | Stage::Strata)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub cells_per_axis: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(default = "default_rho_max")]
    pub rho_max: f64,
    #[serde(default)]
    pub rungs: Option<usize>,
}

fn default_rho_max() -> f64 {
    RHO_MAX
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            rho_max: RHO_MAX,
            rungs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

/// Where `diagnose` and `blowup` recentre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum BasePoint {
    Origin,
    /// The free-boundary point nearest the origin, or the origin if there is
    /// none.
    #[default]
    FreeBoundary,
    Point(Vec<f64>),
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub cases: Vec<ConvergenceCase>,
    pub levels: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            cases: vec![ConvergenceCase::Linear, ConvergenceCase::Smooth, ConvergenceCase::LogSolution],
            levels: vec![33, 65, 129, 257],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub ladder: LadderConfig,
    pub pipeline: Vec<Stage>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seeds: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub base_point: BasePoint,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, cells_per_axis: usize, pipeline: Vec<Stage>, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION.into(),
            grid: GridConfig {
                dim: problem.dim,
                cells_per_axis,
            },
            problem,
            ladder: LadderConfig::default(),
            pipeline,
            output_dir: output_dir.into(),
            seeds: 0,
            solver: SolverConfig::default(),
            base_point: BasePoint::default(),
            convergence: ConvergenceConfig::default(),
        }
    }

    /// Parse and validate; every failure is an [`Error::Config`] or
    /// [`Error::Parse`] naming the offending field.
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("config serializes").as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected \"{SCHEMA_VERSION}\", got \"{}\"",
                self.schema_version
            )));
        }
        if self.grid.dim != self.problem.dim {
            return Err(Error::Config(format!(
                "grid.dim {} differs from problem.dim {}",
                self.grid.dim, self.problem.dim
            )));
        }
        if !(self.ladder.rho_max > 0.0 && self.ladder.rho_max <= RHO_MAX) {
            return Err(Error::Config(format!("ladder.rho_max must lie in (0, {RHO_MAX}]")));
        }
        if self.pipeline.is_empty() {
            return Err(Error::Config("pipeline: at least one stage required".into()));
        }
        let mut solved = false;
        for s in &self.pipeline {
            if s.needs_solution() && !solved {
                return Err(Error::Config(format!("pipeline: {} needs an earlier solve stage", s.name())));
            }
            solved |= *s == Stage::Solve;
        }
        if let BasePoint::Point(p) = &self.base_point {
            if p.len() != self.problem.dim {
                return Err(Error::Config(format!("base_point: expected {} coordinates", self.problem.dim)));
            }
        }
        if self.pipeline.contains(&Stage::Convergence) && self.convergence.levels.len() < 3 {
            return Err(Error::Config("convergence.levels: at least 3 levels required".into()));
        }
        let spec = self.build()?;
        validate_spec(&spec)
            .into_result()
            .map_err(|e| Error::Config(format!("problem: {e}")))?;
        Ok(())
    }

    /// Grid and problem spec; parse errors name the problem field.
    pub fn build(&self) -> Result<ProblemSpec> {
        let grid = Grid::new(self.grid.dim, self.grid.cells_per_axis).map_err(|e| Error::Config(format!("grid: {e}")))?;
        self.problem.build(&grid)
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub stage: String,
    /// SHA-256 of the contents; absent for the manifest itself.
    pub sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seconds: f64,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub stage: String,
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
    pub stages: Vec<StageRecord>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunManifest {
    /// 0 when every stage ran and every check passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    spec: ProblemSpec,
    solution: Option<SolveResult>,
    diagnosis: Option<Diagnosis>,
    artifacts: Vec<Artifact>,
    checks: Vec<Check>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Runner<'_> {
    fn write(&mut self, stage: Stage, name: &str, body: &str) -> Result<()> {
        fs::write(self.out.join(name), body)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.into(),
            stage: stage.name().into(),
            sha256: Some(sha256_hex(body.as_bytes())),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, stage: Stage, name: &str, value: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(value)?;
        self.write(stage, name, &body)
    }

    fn check(&mut self, stage: Stage, name: &str, pass: bool, value: f64, threshold: f64) {
        self.checks.push(Check {
            stage: stage.name().into(),
            name: name.into(),
            pass,
            value,
            threshold,
        });
    }

    fn solution(&self) -> Result<&SolveResult> {
        self.solution
            .as_ref()
            .ok_or_else(|| Error::Inconsistent("no solution available".into()))
    }

    fn base_point(&self) -> Result<Point> {
        let n = self.spec.dim();
        Ok(match &self.cfg.base_point {
            BasePoint::Origin => [0.0; 3],
            BasePoint::FreeBoundary => nearest_free_boundary_point(&self.spec, &self.solution()?.u).unwrap_or([0.0; 3]),
            BasePoint::Point(p) => {
                let mut x = [0.0; 3];
                x[..n].copy_from_slice(p);
                x
            }
        })
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Solve => self.solve(),
            Stage::Diagnose => self.diagnose().map(|_| ()),
            Stage::Blowup => self.blowup(),
            Stage::Strata => self.strata(),
            Stage::Verify => self.verify(),
            Stage::Convergence => self.convergence(),
        }
    }

    fn solve(&mut self) -> Result<()> {
        let opts = self.cfg.solver_options();
        let initial = if self.cfg.seeds == 0 { Initial::Zero } else { Initial::Random(self.cfg.seeds) };
        let res = match solve(&self.spec, initial, &opts) {
            Ok(r) => r,
            Err(Error::NonConvergence { last, .. }) => *last,
            Err(e) => return Err(e),
        };
        #[derive(Serialize)]
        struct SolveArtifact<'a> {
            dim: usize,
            cells_per_axis: usize,
            spacing: f64,
            energy: Option<f64>,
            result: &'a SolveResult,
        }
        let grid = &self.spec.grid;
        let art = SolveArtifact {
            dim: grid.dim(),
            cells_per_axis: grid.cells_per_axis(),
            spacing: grid.spacing(),
            energy: res.energy_history.last().copied(),
            result: &res,
        };
        self.write_json(Stage::Solve, "solve.json", &art)?;
        self.write(Stage::Solve, "solution.csv", &solution_csv(&res.u))?;
        self.check(Stage::Solve, "converged", res.converged, res.gradient_norm, opts.tol);
        let bound = WEAK_RESIDUAL_FACTOR * opts.tol;
        self.check(Stage::Solve, "weak_residual", res.weak_residual <= bound, res.weak_residual, bound);
        self.solution = Some(res);
        Ok(())
    }

    fn diagnose(&mut self) -> Result<&Diagnosis> {
        let x0 = self.base_point()?;
        let d = diagnose(&self.spec, &self.solution()?.u, &x0, self.cfg.ladder.rho_max, self.cfg.ladder.rungs)?;
        self.write(Stage::Diagnose, "frequency.csv", &d.profile.to_csv())?;
        self.write_json(Stage::Diagnose, "frequency.json", &d)?;
        let tol = crate::pipeline::MONOTONE_TOL;
        self.check(Stage::Diagnose, "almgren_monotone", d.almgren.pass, d.almgren.worst_violation, tol);
        self.check(Stage::Diagnose, "weiss_monotone", d.weiss.pass, d.weiss.worst_violation, tol);
        if let Some(m) = &d.monneau {
            self.check(Stage::Diagnose, "monneau_monotone", m.pass, m.worst_violation, tol);
        }
        self.check(
            Stage::Diagnose,
            "surface_volume_identity",
            d.identity_failures.is_empty(),
            d.identity_failures.len() as f64,
            0.0,
        );
        self.diagnosis = Some(d);
        Ok(self.diagnosis.as_ref().unwrap())
    }

    fn blowup(&mut self) -> Result<()> {
        if self.diagnosis.is_none() {
            self.diagnose()?;
        }
        let d = self.diagnosis.clone().unwrap();
        let np = normalize_at(&self.spec, &self.solution()?.u, &d.base_point)?;
        let inp = DiagnosticInput::from_normalized(&np, None);
        #[derive(Serialize)]
        struct RescaleSummary {
            rho: f64,
            almgren_scale: f64,
            homogeneous_scale: f64,
            /// `sup |v(ρy)/ρ^ν − v*(y)|` over window nodes in the unit half-ball.
            tangent_misfit: Option<f64>,
        }
        let n = self.spec.dim();
        let rungs = &d.profile.ladder.rho;
        let mut rescalings = Vec::new();
        for &rho in &rungs[rungs.len().saturating_sub(3)..] {
            let hom = rescale(&inp, d.base_point, rho, RescaleMode::Homogeneous { nu: d.nu as f64 }, 17)?;
            let alm = rescale(&inp, d.base_point, rho, RescaleMode::Almgren, 17).map(|r| r.scale).unwrap_or(f64::NAN);
            let misfit = d.tangent.as_ref().map(|t| {
                let g = hom.field.grid();
                (0..g.node_count())
                    .map(|i| g.node(i))
                    .filter(|y| y[..n].iter().map(|c| c * c).sum::<f64>() <= 1.0)
                    .map(|y| (hom.field.interpolate(&y).unwrap_or(f64::NAN) - t.eval(&y)).abs())
                    .fold(0.0, f64::max)
            });
            rescalings.push(RescaleSummary {
                rho,
                almgren_scale: alm,
                homogeneous_scale: hom.scale,
                tangent_misfit: misfit,
            });
        }
        #[derive(Serialize)]
        struct TangentArtifact<'a> {
            base_point: Point,
            estimate: &'a Option<crate::blowup::FrequencyEstimate>,
            nu: usize,
            tangent: &'a Option<TangentPolynomial>,
            rescalings: Vec<RescaleSummary>,
        }
        let art = TangentArtifact {
            base_point: d.base_point,
            estimate: &d.estimate,
            nu: d.nu,
            tangent: &d.tangent,
            rescalings,
        };
        self.write_json(Stage::Blowup, "tangent.json", &art)
    }

    fn strata(&mut self) -> Result<()> {
        let u = self.solution()?.u.clone();
        let contact = extract_contact_set(&u, &self.spec.obstacle, None);
        let frontier = dedupe(&extract_free_boundary(&contact), self.spec.grid.spacing() / 2.0);
        let (points, excluded) = classify_all(&frontier, &u, &self.spec, &ClassifyOptions::default())?;
        let strata = stratify(&points);
        let singular: Vec<&FreeBoundaryPoint> = points.iter().filter(|p| p.tangent.is_some()).collect();
        let continuity = crate::blowup::tangent_continuity_report(
            &singular.iter().map(|p| p.location).collect::<Vec<_>>(),
            &singular.iter().filter_map(|p| p.tangent.clone()).collect::<Vec<_>>(),
        )
        .ok();
        #[derive(Serialize)]
        struct Atlas<'a> {
            tau_contact: f64,
            contact_nodes: usize,
            points: &'a [FreeBoundaryPoint],
            excluded: &'a [Point],
            strata: Vec<crate::freeboundary::Stratum>,
            continuity: Option<crate::blowup::ContinuityReport>,
        }
        self.write_json(
            Stage::Strata,
            "atlas.json",
            &Atlas {
                tau_contact: contact.tau_contact,
                contact_nodes: contact.count(),
                points: &points,
                excluded: &excluded,
                strata,
                continuity,
            },
        )?;
        self.write(Stage::Strata, "free_boundary.csv", &free_boundary_csv(&points, self.spec.dim()))
    }

    fn verify(&mut self) -> Result<()> {
        let opts = SuiteOptions {
            seed: if self.cfg.seeds == 0 { SuiteOptions::default().seed } else { self.cfg.seeds },
            ..Default::default()
        };
        let report = run_suite(&opts);
        for c in &report.criteria {
            self.check(Stage::Verify, &format!("criterion_{}", c.id), c.pass, c.measured, c.threshold);
        }
        self.write(Stage::Verify, "acceptance.csv", &report.to_csv())?;
        self.write_json(Stage::Verify, "acceptance.json", &report)
    }

    fn convergence(&mut self) -> Result<()> {
        let mut csv = String::new();
        let mut tables = Vec::new();
        for &case in &self.cfg.convergence.cases {
            let t = convergence_study(case, 2, &self.cfg.convergence.levels)?;
            let body = t.to_csv();
            if csv.is_empty() {
                csv.push_str(&body);
            } else {
                csv.push_str(body.split_once('\n').map_or("", |(_, rest)| rest));
            }
            let (name, pass, value, threshold) = match case {
                ConvergenceCase::Linear => ("linear_exact", t.exact, t.rows.last().map_or(0.0, |r| r.error), 1e-10),
                ConvergenceCase::Smooth => {
                    let o = t.min_order.unwrap_or(f64::INFINITY);
                    ("smooth_order", o >= crate::verify::SMOOTH_ORDER, o, crate::verify::SMOOTH_ORDER)
                }
                ConvergenceCase::LogSolution => {
                    let o = t.min_order.unwrap_or(f64::INFINITY);
                    ("log_solution_order", o >= crate::verify::SINGULAR_ORDER, o, crate::verify::SINGULAR_ORDER)
                }
            };
            self.check(Stage::Convergence, name, pass, value, threshold);
            tables.push(t);
        }
        self.write(Stage::Convergence, "convergence.csv", &csv)?;
        self.write_json(Stage::Convergence, "convergence.json", &tables)
    }
}

/// `x1,..,kind,nu,d,nu_hat,tangential_gradient,flagged`, one row per point.
pub fn free_boundary_csv(points: &[FreeBoundaryPoint], dim: usize) -> String {
    let axes = ["x1", "x2", "x3"];
    let mut out = axes[..dim].join(",");
    out.push_str(",kind,nu,d,nu_hat,tangential_gradient,flagged\n");
    let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
    for p in points {
        for c in &p.location[..dim] {
            let _ = write!(out, "{c:.16e},");
        }
        let kind = match p.kind {
            PointKind::Regular => "regular",
            PointKind::Singular => "singular",
            PointKind::TruncationLimited => "truncation_limited",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{:.16e},{}",
            csv_field(kind),
            opt(p.nu),
            opt(p.stratum_dim),
            p.frequency.as_ref().map(|f| format!("{:.16e}", f.nu_hat)).unwrap_or_default(),
            p.tangential_gradient,
            p.nondegeneracy_flag
        );
    }
    out
}

/// Execute the stages in order. Configuration problems are returned as
/// errors before anything is written; a failing stage is recorded in the
/// manifest, later stages are skipped and the artifacts written so far stay.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let spec = cfg.build()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut runner = Runner {
        cfg,
        out: cfg.output_dir.clone(),
        spec,
        solution: None,
        diagnosis: None,
        artifacts: Vec::new(),
        checks: Vec::new(),
    };
    let mut stages = Vec::new();
    for &stage in &cfg.pipeline {
        let start = Instant::now();
        let outcome = runner.run_stage(stage);
        let failed = outcome.is_err();
        stages.push(StageRecord {
            stage: stage.name().into(),
            seconds: start.elapsed().as_secs_f64(),
            ok: !failed,
            error: outcome.err().map(|e| e.to_string()),
        });
        if failed {
            break;
        }
    }
    let mut artifacts = runner.artifacts;
    artifacts.push(Artifact {
        path: "manifest.json".into(),
        stage: "run".into(),
        sha256: None,
    });
    let passed = stages.len() == cfg.pipeline.len()
        && stages.iter().all(|s| s.ok)
        && runner.checks.iter().all(|c| c.pass);
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION.into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        artifacts,
        stages,
        checks: runner.checks,
        passed,
    };
    fs::write(cfg.output_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Solve the configured problem without writing anything.
pub fn solve_only(cfg: &ExperimentConfig) -> Result<(ProblemSpec, ScalarField)> {
    let spec = cfg.build()?;
    let res = solve(&spec, Initial::Zero, &cfg.solver_options())?;
    Ok((spec, res.u))
}
