//! Post-solve diagnostics: per-dimension matching table, terminal density
//! grid and the validation checks behind the exit status.

use diststeer::cf::CfTable;
use diststeer::matching::{match_report, sup_window, terminal_marginal_cf, MatchError};
use diststeer::mc::{ks_tolerances, terminal_ks, McReport};
use diststeer::steer::{Solution, SolveStatus, SteeringProblem};

use crate::scenario::ValidationSection;

/// Slack allowed on `sup |ψ − ψ_f| ≤ D_i`.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionRow {
    pub dimension: usize,
    pub sup_deviation: f64,
    /// `(1/2π) ∫ |φ − φ_f| dt`.
    pub distance: f64,
    pub ks: f64,
    pub ks_limit: f64,
    /// Whether the KS check counts toward validation.
    pub ks_checked: bool,
}

impl DimensionRow {
    pub fn bound_holds(&self) -> bool {
        self.distance.is_finite() && self.sup_deviation <= self.distance + BOUND_TOLERANCE
    }

    pub fn ks_pass(&self) -> bool {
        self.ks < self.ks_limit
    }
}

pub fn dimension_rows(
    problem: &SteeringProblem,
    sol: &Solution,
    mc: &McReport,
    v: &ValidationSection,
) -> Result<Vec<DimensionRow>, MatchError> {
    let mr = match_report(
        problem.lifted(),
        &sol.controller,
        problem.components(),
        problem.target(),
        problem.quadrature(),
    )?;
    let ks = terminal_ks(mc, problem.target());
    let derived = ks_tolerances(mc.samples, &mr.distances);
    Ok((0..problem.target().dim())
        .map(|i| DimensionRow {
            dimension: i,
            sup_deviation: mr.sup_deviations[i],
            distance: mr.distances[i],
            ks: ks[i],
            ks_limit: v.ks_limit.unwrap_or(derived[i]),
            ks_checked: v.ks_dimensions.as_ref().is_none_or(|d| d.contains(&i)),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityPoint {
    pub dimension: usize,
    pub y: f64,
    pub achieved: f64,
    pub target: f64,
}

/// Achieved terminal pdf (Fourier inversion) and target pdf on an even grid
/// over the comparison window of each dimension.
pub fn terminal_density(
    problem: &SteeringProblem,
    sol: &Solution,
    points: usize,
) -> Result<Vec<DensityPoint>, MatchError> {
    let mut out = Vec::with_capacity(points * problem.target().dim());
    for (i, target) in problem.target().marginals().iter().enumerate() {
        let lc = terminal_marginal_cf(problem.lifted(), &sol.controller, problem.components(), i)?;
        let (lo, hi) = sup_window(&lc, target);
        let table = CfTable::with_window(
            &lc,
            problem.quadrature(),
            (hi - lc.mean()).max(lc.mean() - lo),
        )?;
        let step = (hi - lo) / (points - 1) as f64;
        out.extend((0..points).map(|k| {
            let y = lo + k as f64 * step;
            DensityPoint {
                dimension: i,
                y,
                achieved: table.pdf(y),
                target: target.pdf(y),
            }
        }));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value <= limit,
        }
    }
}

/// Every check that decides a validated run.
pub fn validation_checks(
    problem: &SteeringProblem,
    sol: &Solution,
    status: Option<SolveStatus>,
    mc: &McReport,
    rows: &[DimensionRow],
    v: &ValidationSection,
) -> Vec<Check> {
    let spec = problem.spec();
    let mut checks = vec![
        Check {
            name: "solver_converged".into(),
            value: if status.is_some() { 1.0 } else { 0.0 },
            limit: 1.0,
            pass: status.is_some(),
        },
        Check::at_most(
            "chance_margin_violation",
            sol.diagnostics.max_violation,
            problem.options().feasibility_tolerance,
        ),
        Check::at_most(
            "state_risk_sum",
            sol.risk.state_sum(),
            spec.state_risk * (1.0 + 1e-12),
        ),
        Check::at_most(
            "input_risk_sum",
            sol.risk.input_sum(),
            spec.input_risk * (1.0 + 1e-12),
        ),
        Check::at_most(
            "state_joint_violation_mc",
            mc.state_joint_rate,
            spec.state_risk,
        ),
        Check::at_most(
            "input_joint_violation_mc",
            mc.input_joint_rate,
            spec.input_risk,
        ),
    ];
    for r in rows {
        checks.push(Check {
            name: format!("deviation_bound[{}]", r.dimension),
            value: r.sup_deviation,
            limit: r.distance + BOUND_TOLERANCE,
            pass: r.bound_holds(),
        });
    }
    for r in rows.iter().filter(|r| r.ks_checked) {
        checks.push(Check {
            name: format!("terminal_ks[{}]", r.dimension),
            value: r.ks,
            limit: r.ks_limit,
            pass: r.ks_pass(),
        });
    }
    if let Some(gap) = v.cost_gap {
        checks.push(Check::at_most(
            "cost_gap_mc",
            relative_cost_gap(sol.cost, mc.cost_mean),
            gap,
        ));
    }
    checks
}

/// `|J − J_MC| / |J|`.
pub fn relative_cost_gap(cost: f64, cost_mc: f64) -> f64 {
    (cost - cost_mc).abs() / cost.abs().max(f64::MIN_POSITIVE)
}
