use super::evaluate::{Evaluation, Evaluator};
use super::lbfgs;
use super::{Diagnostics, OuterRecord, Solution, SolveStatus, SteerError, SteeringProblem};
use crate::matching::{marginal_distance, MatchError};

/// Consecutive feasible outer iterations without objective progress before
/// a run counts as stalled.
const STALL_WINDOW: usize = 3;
/// The penalty grows when the violation shrinks by less than this factor.
const VIOLATION_DECREASE: f64 = 0.25;

/// PHR term `(max(0, μ − ρc)² − μ²) / 2ρ` for `c ≥ 0` constraints and its
/// derivative in `c`.
fn phr(c: f64, mu: f64, rho: f64) -> (f64, f64) {
    let shifted = (mu - rho * c).max(0.0);
    ((shifted * shifted - mu * mu) / (2.0 * rho), -shifted)
}

fn merit(e: &Evaluation, mu: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let mut value = e.objective;
    let mut grad = e.gradient.clone();
    for ((c, dc), &m) in e.slacks.iter().zip(&e.slack_gradients).zip(mu) {
        let (v, d) = phr(*c, m, rho);
        value += v;
        if d != 0.0 {
            grad.iter_mut().zip(dc).for_each(|(g, x)| *g += d * x);
        }
    }
    (value, grad)
}

fn slack_violation(e: &Evaluation) -> f64 {
    e.slacks.iter().fold(0.0, |m, c| m.max(-c))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Assembles a [`Solution`] at `z`, recomputing margins and every `D_i`.
pub(crate) fn solution_at(
    ev: &Evaluator<'_>,
    z: &[f64],
    diagnostics: Diagnostics,
) -> Result<Solution, SteerError> {
    let p = ev.problem();
    let e = ev.evaluate(z)?;
    let controller = ev.controller(z)?;
    let margins = ev.margins(z)?;
    let distances = (0..p.lambda().len())
        .map(|i| {
            match marginal_distance(
                p.lifted(),
                &controller,
                p.components(),
                p.target(),
                i,
                p.quadrature(),
            ) {
                Ok(d) => Ok(d),
                Err(MatchError::NotIntegrable { .. }) => Ok(f64::INFINITY),
                Err(err) => Err(err),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max_violation = margins.iter().fold(0.0_f64, |m, x| m.max(-x));
    Ok(Solution {
        controller,
        risk: ev.risk(z),
        objective: e.objective,
        cost: e.cost,
        distances,
        margins,
        diagnostics: Diagnostics {
            max_violation,
            ..diagnostics
        },
    })
}

struct Best {
    z: Vec<f64>,
    objective: f64,
    violation: f64,
    feasible: bool,
}

impl Best {
    fn better(&self, objective: f64, violation: f64, feasible: bool) -> bool {
        match (self.feasible, feasible) {
            (false, true) => true,
            (true, false) => false,
            (true, true) => objective < self.objective,
            (false, false) => violation < self.violation,
        }
    }
}

/// Augmented-Lagrangian solve of the steering problem over
/// `(K, v, risk shares)`, starting from `K = 0`, the mean-system LQ
/// feedforward and uniform risk.
pub fn solve(problem: &SteeringProblem) -> Result<Solution, SteerError> {
    let o = problem.options().clone();
    let ev = Evaluator::new(problem, o.risk_mode)?;
    let mut z = ev.initial_point();
    let mut mu = vec![0.0; ev.constraint_count()];
    let mut rho = o.initial_penalty;
    let mut diag = Diagnostics {
        status: None,
        outer_iterations: 0,
        inner_iterations: 0,
        evaluations: 0,
        max_violation: f64::INFINITY,
        stationarity: f64::INFINITY,
        penalty: rho,
        history: Vec::new(),
    };
    let mut best: Option<Best> = None;
    let mut previous_violation = f64::INFINITY;
    let mut previous_objective: Option<f64> = None;
    let mut quiet = 0;

    let finish = |z: &[f64], diag: Diagnostics| solution_at(&ev, z, diag);
    let breakdown = |reason: String, best: Option<&Best>, diag: &Diagnostics| -> SteerError {
        let best = best
            .and_then(|b| solution_at(&ev, &b.z, diag.clone()).ok())
            .map(Box::new);
        SteerError::NumericalBreakdown { reason, best }
    };

    for outer in 1..=o.max_outer_iterations {
        let inner = lbfgs::minimize(
            |x| ev.evaluate(x).map(|e| merit(&e, &mu, rho)),
            z.clone(),
            o.lbfgs_memory,
            o.max_inner_iterations,
            o.stationarity_tolerance,
        );
        let inner = match inner {
            Ok(r) => r,
            Err(e) => return Err(breakdown(e.to_string(), best.as_ref(), &diag)),
        };
        diag.outer_iterations = outer;
        diag.inner_iterations += inner.iterations;
        diag.evaluations += inner.evaluations;
        z = inner.x;
        let e = ev.evaluate(&z)?;
        let violation = slack_violation(&e);
        for (m, c) in mu.iter_mut().zip(&e.slacks) {
            *m = (*m - rho * c).max(0.0);
        }
        // ∇f − Σμ∇c with the updated multipliers equals the merit gradient
        let mut lagrangian = e.gradient.clone();
        for (dc, &m) in e.slack_gradients.iter().zip(&mu) {
            lagrangian.iter_mut().zip(dc).for_each(|(g, x)| *g -= m * x);
        }
        diag.stationarity = inf_norm(&lagrangian);
        diag.penalty = rho;
        diag.history.push(OuterRecord {
            objective: e.objective,
            merit_start: inner.trace[0],
            merit_end: *inner.trace.last().expect("trace starts with x₀"),
            slack_violation: violation,
            penalty: rho,
            inner_iterations: inner.iterations,
        });

        let margins = ev.margins(&z)?;
        let max_violation = margins.iter().fold(0.0_f64, |m, x| m.max(-x));
        let feasible = max_violation <= o.feasibility_tolerance;
        diag.max_violation = max_violation;
        if best
            .as_ref()
            .is_none_or(|b| b.better(e.objective, max_violation, feasible))
        {
            best = Some(Best {
                z: z.clone(),
                objective: e.objective,
                violation: max_violation,
                feasible,
            });
        }
        if feasible && diag.stationarity <= o.stationarity_tolerance {
            diag.status = Some(SolveStatus::Converged);
            return finish(&z, diag);
        }
        let progress = previous_objective
            .map(|f: f64| (f - e.objective).abs() > o.stall_tolerance * e.objective.abs().max(1.0))
            .unwrap_or(true);
        quiet = if feasible && !progress { quiet + 1 } else { 0 };
        if quiet >= STALL_WINDOW {
            diag.status = Some(SolveStatus::Stalled);
            return finish(&z, diag);
        }
        previous_objective = Some(e.objective);

        if violation > VIOLATION_DECREASE * previous_violation {
            rho *= o.penalty_growth;
            if rho > o.max_penalty {
                break;
            }
        }
        previous_violation = violation;
    }

    let best = best.expect("at least one outer iteration ran");
    if best.feasible {
        let z = best.z;
        let limit = diag.outer_iterations >= o.max_outer_iterations;
        if limit {
            let sol = finish(&z, diag)?;
            return Err(SteerError::MaxIterations {
                best: Box::new(sol),
            });
        }
        diag.status = Some(SolveStatus::Stalled);
        return finish(&z, diag);
    }
    let sol = finish(&best.z, diag.clone())?;
    if diag.outer_iterations >= o.max_outer_iterations {
        Err(SteerError::MaxIterations {
            best: Box::new(sol),
        })
    } else {
        Err(SteerError::Infeasible {
            best: Box::new(sol),
        })
    }
}
