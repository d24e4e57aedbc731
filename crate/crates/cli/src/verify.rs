//! Re-reads a run directory and re-derives its invariants from the saved
//! scenario and controller.

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use diststeer::matching::match_report;
use diststeer::steer::cost_exact;

use crate::analysis::BOUND_TOLERANCE;
use crate::report::{
    read_solution, Header, ReportError, Table, SCENARIO_COPY, SOLUTION, TABLE1, TABLE2,
};
use crate::scenario::{Scenario, ScenarioError};

/// Relative tolerance for recomputed cost and distances.
pub const RECOMPUTE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{} check(s) failed: {}", .0.len(), .0.join("; "))]
    ConsistencyFailure(Vec<String>),
}

impl VerifyError {
    /// I/O and parse problems as opposed to failed checks.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, VerifyError::ConsistencyFailure(_))
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RECOMPUTE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Names of the checks that passed, or every failure.
pub fn verify(dir: &Path) -> Result<Vec<String>, VerifyError> {
    let solution = Table::read(dir, SOLUTION)?;
    let table1 = Table::read(dir, TABLE1)?;
    let table2 = Table::read(dir, TABLE2)?;
    let copy = dir.join(SCENARIO_COPY);
    let text = std::fs::read_to_string(&copy).map_err(|source| ReportError::Io {
        path: copy.clone(),
        source,
    })?;
    let header = solution.header.clone();
    let scenario = Scenario::parse(&text, &header.overrides())?;
    let problem = &scenario.problem;
    let spec = problem.spec();

    let mut passed = Vec::new();
    let mut failed = Vec::new();
    let mut check = |name: String, ok: bool, detail: String| {
        if ok {
            passed.push(name);
        } else {
            failed.push(format!("{name}: {detail}"));
        }
    };

    let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
    check(
        "scenario_hash".into(),
        digest == header.sha256,
        format!("{SCENARIO_COPY} hashes to {digest}"),
    );
    let same = [&table1, &table2].iter().all(|t| {
        Header {
            generated: None,
            ..t.header.clone()
        } == Header {
            generated: None,
            ..header.clone()
        }
    });
    check(
        "headers_agree".into(),
        same,
        "files come from different runs".into(),
    );

    // per-dimension pdf deviation bound
    let (dcol, scol) = (table1.column("distance")?, table1.column("sup_deviation")?);
    let mut table_distances = Vec::new();
    for r in 0..table1.rows.len() {
        let (d, s) = (table1.number(r, dcol)?, table1.number(r, scol)?);
        table_distances.push(d);
        check(
            format!("deviation_bound[{r}]"),
            d.is_finite() && s <= d + BOUND_TOLERANCE,
            format!("sup deviation {s} exceeds D = {d}"),
        );
    }

    let (ctrl, risk) = read_solution(
        &solution,
        problem.lifted(),
        problem.state_constraint_count(),
        problem.input_constraint_count(),
        (spec.state_risk, spec.input_risk),
    )?;
    let slack = 1.0 + 1e-12;
    check(
        "state_risk_sum".into(),
        risk.state.iter().all(|d| *d > 0.0) && risk.state_sum() <= spec.state_risk * slack,
        format!(
            "shares sum to {} against {}",
            risk.state_sum(),
            spec.state_risk
        ),
    );
    check(
        "input_risk_sum".into(),
        risk.input.iter().all(|d| *d > 0.0) && risk.input_sum() <= spec.input_risk * slack,
        format!(
            "shares sum to {} against {}",
            risk.input_sum(),
            spec.input_risk
        ),
    );
    let reported = table2.metric_number("state_risk_allocated")?;
    check(
        "state_risk_reported".into(),
        close(reported, risk.state_sum()),
        format!(
            "{TABLE2} reports {reported}, {SOLUTION} sums to {}",
            risk.state_sum()
        ),
    );

    let cost = cost_exact(problem, &ctrl);
    let reported = table2.metric_number("cost")?;
    check(
        "cost_recomputed".into(),
        close(cost, reported),
        format!("{TABLE2} reports {reported}, recomputed {cost}"),
    );

    let mr = match_report(
        problem.lifted(),
        &ctrl,
        problem.components(),
        problem.target(),
        problem.quadrature(),
    )
    .map_err(|e| VerifyError::ConsistencyFailure(vec![format!("distance_recomputed: {e}")]))?;
    check(
        "distance_recomputed".into(),
        mr.distances.len() == table_distances.len()
            && mr
                .distances
                .iter()
                .zip(&table_distances)
                .all(|(a, b)| close(*a, *b)),
        format!(
            "recomputed {:?}, {TABLE1} holds {table_distances:?}",
            mr.distances
        ),
    );

    let status = table2.metric("status")?;
    if status == "converged" || status == "stalled" {
        let tol = problem.options().feasibility_tolerance;
        match problem.margins(&ctrl, &risk) {
            Ok(m) => {
                let worst = m.iter().fold(0.0_f64, |w, x| w.max(-x));
                check(
                    "chance_margins".into(),
                    worst <= tol,
                    format!("margin violated by {worst}"),
                );
            }
            Err(e) => check("chance_margins".into(), false, e.to_string()),
        }
    }

    if failed.is_empty() {
        Ok(passed)
    } else {
        Err(VerifyError::ConsistencyFailure(failed))
    }
}
