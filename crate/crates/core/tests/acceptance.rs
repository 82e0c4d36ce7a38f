//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;

use obstacle_lab::verify::{run_suite, SuiteOptions};

fn main() -> ExitCode {
    let report = run_suite(&SuiteOptions::default());
    for c in &report.criteria {
        println!("{}", c.line());
    }
    let failed = report.criteria.iter().filter(|c| !c.pass).count();
    println!("acceptance: {} passed, {failed} failed", report.criteria.len() - failed);
    if failed == 0 && report.criteria.len() == 14 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
