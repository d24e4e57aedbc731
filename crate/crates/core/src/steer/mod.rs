//! Problem assembly and the augmented-Lagrangian solver for distribution
//! steering with chance constraints.

mod cost;
mod evaluate;
mod gradcheck;
mod lbfgs;
mod problem;
mod solver;
#[cfg(test)]
pub(crate) mod test_support;

use thiserror::Error;

use crate::cf::CfError;
use crate::constraints::{ConstraintError, RiskAllocation};
use crate::lift::{Controller, LiftError};
use crate::matching::MatchError;

pub use cost::{cost_exact, cost_gradient, mean_lq_feedforward, warm_start_feedforward};
pub use evaluate::{objective, Evaluation, Evaluator, RiskParameterization};
pub use gradcheck::{
    gradient_check, gradient_check_with_step, GradientEntry, GradientReport, Quantity,
};
pub use problem::{ProblemSpec, SteeringProblem};
pub use solver::solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMode {
    /// Risk shares are decision variables summing to the budget.
    Optimize,
    /// Every constraint gets `budget / count`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub risk_mode: RiskMode,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub feasibility_tolerance: f64,
    pub stationarity_tolerance: f64,
    /// Relative objective change below which a feasible run counts as stalled.
    pub stall_tolerance: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Multiplies every quantile slack before it enters the Lagrangian.
    pub constraint_scale: f64,
    pub lbfgs_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            risk_mode: RiskMode::Optimize,
            max_outer_iterations: 500,
            max_inner_iterations: 200,
            feasibility_tolerance: 1e-6,
            stationarity_tolerance: 1e-6,
            stall_tolerance: 1e-9,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            constraint_scale: 1.0,
            lbfgs_memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Stationarity and feasibility tolerances met.
    Converged,
    /// Feasible, with the objective no longer improving.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub status: Option<SolveStatus>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
    /// Largest violation of a probability margin `P(row ≤ bound) − (1 − δ)`.
    pub max_violation: f64,
    /// Infinity norm of the Lagrangian gradient at the returned iterate.
    pub stationarity: f64,
    pub penalty: f64,
    pub history: Vec<OuterRecord>,
}

/// State after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub objective: f64,
    /// Augmented Lagrangian at the start and end of the inner solve, with the
    /// multipliers and penalty that were in force during it.
    pub merit_start: f64,
    pub merit_end: f64,
    /// Largest negative part of the scaled quantile slacks.
    pub slack_violation: f64,
    pub penalty: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub controller: Controller,
    pub risk: RiskAllocation,
    /// `J + Σ λ_i D_i`.
    pub objective: f64,
    /// `J(K, v)`.
    pub cost: f64,
    pub distances: Vec<f64>,
    /// Probability margins in constraint order (state rows, then input rows).
    pub margins: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteerError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("no feasible iterate found (max violation {:.3e})", .best.diagnostics.max_violation)]
    Infeasible { best: Box<Solution> },
    #[error("iteration limit reached (max violation {:.3e})", .best.diagnostics.max_violation)]
    MaxIterations { best: Box<Solution> },
    #[error("numerical breakdown: {reason}")]
    NumericalBreakdown {
        reason: String,
        best: Option<Box<Solution>>,
    },
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Cf(#[from] CfError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

impl SteerError {
    /// Best iterate carried by solver failures.
    pub fn best(&self) -> Option<&Solution> {
        match self {
            Self::Infeasible { best } | Self::MaxIterations { best } => Some(best),
            Self::NumericalBreakdown { best, .. } => best.as_deref(),
            _ => None,
        }
    }
}
