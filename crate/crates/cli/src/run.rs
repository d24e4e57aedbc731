//! `run`: scenario → solve → Monte-Carlo → artifacts, mapped to an exit code.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use diststeer::matching::MatchError;
use diststeer::mc::{simulate, McError};
use diststeer::steer::{solve, Solution, SolveStatus, SteerError};

use crate::analysis::{dimension_rows, terminal_density, validation_checks, Check};
use crate::report::{Artifacts, Header, ReportError};
use crate::scenario::{Overrides, Scenario, ScenarioError};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    Infeasible = 2,
    Validation = 3,
    Failure = 4,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("solver: {0}")]
    Solver(SteerError),
    #[error("monte carlo: {0}")]
    Mc(#[from] McError),
    #[error("matching diagnostics: {0}")]
    Match(#[from] MatchError),
}

impl RunError {
    pub fn exit(&self) -> Exit {
        match self {
            RunError::Scenario(_) => Exit::Input,
            RunError::Report(ReportError::Io { .. }) => Exit::Input,
            _ => Exit::Failure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub overrides: Overrides,
    pub timestamp: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit: Exit,
    /// `converged`, `stalled`, `infeasible`, `max_iterations` or `breakdown`.
    pub status: String,
    pub solution: Solution,
    pub checks: Vec<Check>,
}

impl RunOutcome {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

pub fn run(opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let scenario = Scenario::load(&opts.scenario, &opts.overrides)?;
    run_scenario(&scenario, &opts.out, opts.timestamp)
}

pub fn run_scenario(
    scenario: &Scenario,
    out: &Path,
    timestamp: bool,
) -> Result<RunOutcome, RunError> {
    let problem = &scenario.problem;
    let (solution, status, failure, exit) = match solve(problem) {
        Ok(sol) => {
            let status = sol.diagnostics.status;
            (sol, status, "", Exit::Ok)
        }
        Err(SteerError::Infeasible { best }) => (*best, None, "infeasible", Exit::Infeasible),
        Err(SteerError::MaxIterations { best }) => {
            (*best, None, "max_iterations", Exit::Validation)
        }
        Err(SteerError::NumericalBreakdown {
            best: Some(best), ..
        }) => (*best, None, "breakdown", Exit::Failure),
        Err(e) => return Err(RunError::Solver(e)),
    };
    let mc = simulate(problem, &solution.controller, &scenario.mc)?;
    let v = &scenario.file.validation;
    let dimensions = dimension_rows(problem, &solution, &mc, v)?;
    let density = terminal_density(problem, &solution, v.density_points)?;
    let checks = validation_checks(problem, &solution, status, &mc, &dimensions, v);
    let header = Header {
        scenario: scenario.file.name.clone(),
        sha256: scenario.hash.clone(),
        seed: scenario.mc.seed,
        mc_samples: scenario.mc.samples,
        lambda_scale: scenario.overrides.lambda_scale,
        fixed_risk: scenario.overrides.fixed_risk,
        generated: timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        }),
    };
    Artifacts {
        header,
        scenario_text: &scenario.text,
        problem,
        solution: &solution,
        status,
        failure,
        mc: &mc,
        dimensions: &dimensions,
        density: &density,
        checks: &checks,
    }
    .write(out)?;
    let exit = if exit == Exit::Ok && checks.iter().any(|c| !c.pass) {
        Exit::Validation
    } else {
        exit
    };
    let status = match status {
        Some(SolveStatus::Converged) => "converged".to_string(),
        Some(SolveStatus::Stalled) => "stalled".to_string(),
        None => failure.to_string(),
    };
    Ok(RunOutcome {
        exit,
        status,
        solution,
        checks,
    })
}
