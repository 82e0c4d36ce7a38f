use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use obstacle_lab::cli::{run, ExperimentConfig, RunManifest, Stage};
use obstacle_lab::verify::uniqueness_config;
use obstacle_lab::Error;

#[derive(Parser)]
#[command(name = "obstacle-lab", version, about = "Two-penalty thin obstacle lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the configured problem.
    Solve,
    /// Solve, then profile the frequency functionals at the base point.
    Diagnose,
    /// Solve, diagnose and fit the tangent polynomial.
    Blowup,
    /// Solve, extract the free boundary and classify its points.
    Strata,
    /// Run the acceptance suite.
    Verify,
    /// Manufactured convergence study.
    Convergence,
    /// Run the stages listed in the config.
    Run,
}

impl Command {
    fn stages(self) -> Option<Vec<Stage>> {
        use Stage::*;
        Some(match self {
            Command::Solve => vec![Solve],
            Command::Diagnose => vec![Solve, Diagnose],
            Command::Blowup => vec![Solve, Diagnose, Blowup],
            Command::Strata => vec![Solve, Strata],
            Command::Verify => vec![Verify],
            Command::Convergence => vec![Convergence],
            Command::Run => return None,
        })
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None if matches!(cli.command, Command::Verify | Command::Convergence) => {
            ExperimentConfig::new(uniqueness_config(), 65, vec![Stage::Verify], "out")
        }
        None => return Err(Error::Config("--config is required for this subcommand".into())),
    };
    if let Some(stages) = cli.command.stages() {
        cfg.pipeline = stages;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(m: &RunManifest) {
    for s in &m.stages {
        match &s.error {
            None => println!("stage {:<12} ok      {:8.3} s", s.stage, s.seconds),
            Some(e) => println!("stage {:<12} FAILED  {:8.3} s  {e}", s.stage, s.seconds),
        }
    }
    for c in &m.checks {
        println!(
            "check {:<12} {:<28} {}  value {:.3e} threshold {:.3e}",
            c.stage,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    println!("{} artifacts in {}", m.artifacts.len(), m.config.output_dir.display());
    println!("{}", if m.passed { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cfg)) {
        Ok(m) => {
            report(&m);
            ExitCode::from(m.exit_code() as u8)
        }
        Err(e @ (Error::Config(_) | Error::Parse { .. })) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
