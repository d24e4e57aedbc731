use super::cost::{cost_exact, cost_gradient};
use super::evaluate::Evaluator;
use super::{RiskMode, SteerError, SteeringProblem};
use crate::lift::Controller;

/// Default central-difference step, scaled by `max(1, |z_j|)`.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Richardson-to-analytic ratios outside this band are flagged.
pub const RATIO_BAND: (f64, f64) = (0.9, 1.1);
/// Below this magnitude both derivatives count as zero.
const NEGLIGIBLE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `J(K, v)` alone.
    Cost,
    /// `J + Σ λ_i D_i`.
    Objective,
    /// Scaled quantile slack of constraint `j`.
    Slack(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEntry {
    pub quantity: Quantity,
    pub parameter: usize,
    pub analytic: f64,
    /// Central differences with steps `h` and `h/2`.
    pub coarse: f64,
    pub fine: f64,
    /// `(4·fine − coarse) / 3`.
    pub richardson: f64,
    /// `richardson / analytic`, 1 when both are negligible.
    pub ratio: f64,
    pub flagged: bool,
}

impl GradientEntry {
    fn new(quantity: Quantity, parameter: usize, analytic: f64, coarse: f64, fine: f64) -> Self {
        let richardson = (4.0 * fine - coarse) / 3.0;
        let ratio = if analytic.abs() < NEGLIGIBLE && richardson.abs() < NEGLIGIBLE {
            1.0
        } else {
            richardson / analytic
        };
        let flagged = !(RATIO_BAND.0..=RATIO_BAND.1).contains(&ratio);
        Self {
            quantity,
            parameter,
            analytic,
            coarse,
            fine,
            richardson,
            ratio,
            flagged,
        }
    }

    /// `|fine − analytic| / max(1, |analytic|)`.
    pub fn relative_error(&self) -> f64 {
        (self.fine - self.analytic).abs() / self.analytic.abs().max(1.0)
    }

    /// Error ratio between the two step sizes; about 4 for a smooth quantity.
    pub fn halving_ratio(&self) -> f64 {
        (self.coarse - self.analytic).abs() / (self.fine - self.analytic).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub step: f64,
    pub entries: Vec<GradientEntry>,
}

impl GradientReport {
    pub fn flagged(&self) -> impl Iterator<Item = &GradientEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }

    pub fn max_relative_error(&self, quantity: impl Fn(Quantity) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|e| quantity(e.quantity))
            .map(GradientEntry::relative_error)
            .fold(0.0, f64::max)
    }
}

/// Compares analytic gradients of the cost, the objective and every
/// constraint slack (uniform risk) against central differences at `ctrl`.
pub fn gradient_check(
    problem: &SteeringProblem,
    ctrl: &Controller,
) -> Result<GradientReport, SteerError> {
    gradient_check_with_step(problem, ctrl, DEFAULT_STEP)
}

pub fn gradient_check_with_step(
    problem: &SteeringProblem,
    ctrl: &Controller,
    step: f64,
) -> Result<GradientReport, SteerError> {
    let lf = problem.lifted();
    let ev = Evaluator::new(problem, RiskMode::Uniform)?;
    let z = ctrl.to_params(lf);
    let base = ev.evaluate(&z)?;
    let (_, dk, dv) = cost_gradient(problem, ctrl);
    let cost_grad = Controller::flatten_gradient(lf, &dk, &dv);

    let central = |j: usize, h: f64| -> Result<(f64, f64, Vec<f64>), SteerError> {
        let eval = |x: f64| -> Result<(f64, f64, Vec<f64>), SteerError> {
            let mut zp = z.clone();
            zp[j] += x;
            let e = ev.evaluate(&zp)?;
            Ok((
                cost_exact(problem, &ev.controller(&zp)?),
                e.objective,
                e.slacks,
            ))
        };
        let (cp, op, sp) = eval(h)?;
        let (cm, om, sm) = eval(-h)?;
        let slacks = sp
            .iter()
            .zip(&sm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        Ok(((cp - cm) / (2.0 * h), (op - om) / (2.0 * h), slacks))
    };

    let mut entries = Vec::new();
    for j in 0..z.len() {
        let h = step * z[j].abs().max(1.0);
        let (cc, oc, sc) = central(j, h)?;
        let (cf, of, sf) = central(j, h / 2.0)?;
        entries.push(GradientEntry::new(Quantity::Cost, j, cost_grad[j], cc, cf));
        entries.push(GradientEntry::new(
            Quantity::Objective,
            j,
            base.gradient[j],
            oc,
            of,
        ));
        for (i, (a, b)) in sc.iter().zip(&sf).enumerate() {
            entries.push(GradientEntry::new(
                Quantity::Slack(i),
                j,
                base.slack_gradients[i][j],
                *a,
                *b,
            ));
        }
    }
    Ok(GradientReport { step, entries })
}
