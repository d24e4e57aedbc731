use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::cost::{cost_exact, cost_gradient, warm_start_feedforward};
use super::{RiskMode, SteerError, SteeringProblem};
use crate::constraints::{ConstraintKind, RiskAllocation, DELTA_MIN};
use crate::lift::{state_map, Controller};
use crate::matching::{marginal_distance, marginal_distance_gradient};

/// `J + Σ λ_i D_i` at `ctrl`.
pub fn objective(p: &SteeringProblem, ctrl: &Controller) -> Result<f64, SteerError> {
    let mut total = cost_exact(p, ctrl);
    for (i, &l) in p.lambda().iter().enumerate() {
        if l > 0.0 {
            total += l * marginal_distance(
                p.lifted(),
                ctrl,
                p.components(),
                p.target(),
                i,
                p.quadrature(),
            )?;
        }
    }
    Ok(total)
}

/// How risk shares are derived from the decision vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskParameterization {
    /// `δ = δ_min + (Δ − nδ_min)·softmax(θ)` per group.
    Softmax {
        state_span: f64,
        input_span: f64,
    },
    Fixed,
}

/// Maps the flat decision vector `[K causal entries; v; θ_x; θ_u]` to the
/// objective and the quantile slacks, with gradients.
#[derive(Debug, Clone)]
pub struct Evaluator<'p> {
    problem: &'p SteeringProblem,
    risk: RiskParameterization,
    n_ctrl: usize,
    n_x: usize,
    n_u: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub cost: f64,
    pub distances: Vec<f64>,
    /// Scaled slacks `s·(bound − Q(1 − δ))`, nonnegative when satisfied.
    pub slacks: Vec<f64>,
    pub slack_gradients: Vec<Vec<f64>>,
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let max = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

impl<'p> Evaluator<'p> {
    pub fn new(problem: &'p SteeringProblem, mode: RiskMode) -> Result<Self, SteerError> {
        let n_ctrl = problem.lifted().controller_parameters();
        let n_x = problem.state_constraint_count();
        let n_u = problem.input_constraint_count();
        let spec = problem.spec();
        for (count, budget, name) in [
            (n_x, spec.state_risk, "state"),
            (n_u, spec.input_risk, "input"),
        ] {
            if count > 0 && budget <= count as f64 * DELTA_MIN {
                return Err(SteerError::InvalidProblem(format!(
                    "{name} risk budget {budget} is too small for {count} constraints"
                )));
            }
        }
        let risk = match mode {
            RiskMode::Uniform => RiskParameterization::Fixed,
            RiskMode::Optimize => RiskParameterization::Softmax {
                state_span: spec.state_risk - n_x as f64 * DELTA_MIN,
                input_span: spec.input_risk - n_u as f64 * DELTA_MIN,
            },
        };
        Ok(Self {
            problem,
            risk,
            n_ctrl,
            n_x,
            n_u,
        })
    }

    pub fn problem(&self) -> &SteeringProblem {
        self.problem
    }

    pub fn dim(&self) -> usize {
        match self.risk {
            RiskParameterization::Fixed => self.n_ctrl,
            RiskParameterization::Softmax { .. } => self.n_ctrl + self.n_x + self.n_u,
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.n_x + self.n_u
    }

    /// `K = 0`, `v` from the mean-system LQ problem pulled toward the target
    /// means, uniform risk.
    pub fn initial_point(&self) -> Vec<f64> {
        let lf = self.problem.lifted();
        let mut z = vec![0.0; lf.gain_parameters()];
        z.extend(warm_start_feedforward(self.problem).iter());
        z.resize(self.dim(), 0.0);
        z
    }

    pub fn controller(&self, z: &[f64]) -> Result<Controller, SteerError> {
        Ok(Controller::from_params(
            self.problem.lifted(),
            &z[..self.n_ctrl],
        )?)
    }

    pub fn risk(&self, z: &[f64]) -> RiskAllocation {
        let spec = self.problem.spec();
        match self.risk {
            RiskParameterization::Fixed => {
                RiskAllocation::uniform(self.n_x, self.n_u, spec.state_risk, spec.input_risk)
            }
            RiskParameterization::Softmax {
                state_span,
                input_span,
            } => {
                let tx = &z[self.n_ctrl..self.n_ctrl + self.n_x];
                let tu = &z[self.n_ctrl + self.n_x..];
                RiskAllocation {
                    state: softmax(tx)
                        .into_iter()
                        .map(|s| DELTA_MIN + state_span * s)
                        .collect(),
                    input: softmax(tu)
                        .into_iter()
                        .map(|s| DELTA_MIN + input_span * s)
                        .collect(),
                    total_state: spec.state_risk,
                    total_input: spec.input_risk,
                }
            }
        }
    }

    fn deltas(&self, risk: &RiskAllocation) -> Vec<f64> {
        risk.state.iter().chain(&risk.input).copied().collect()
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation, SteerError> {
        let p = self.problem;
        let lf = p.lifted();
        let ctrl = self.controller(z)?;
        let (cost, dk, dv) = cost_gradient(p, &ctrl);
        let mut gradient = Controller::flatten_gradient(lf, &dk, &dv);
        gradient.resize(self.dim(), 0.0);
        let sm = state_map(lf, &ctrl)?;
        let terms: Vec<(usize, f64, DMatrix<f64>, DVector<f64>)> = p
            .lambda()
            .par_iter()
            .enumerate()
            .filter(|(_, l)| **l > 0.0)
            .map(|(i, _)| {
                let (d, gk, gv) = marginal_distance_gradient(
                    lf,
                    &sm,
                    p.components(),
                    p.target(),
                    i,
                    p.quadrature(),
                )?;
                Ok((i, d, gk, gv))
            })
            .collect::<Result<_, SteerError>>()?;
        let mut objective = cost;
        let mut distances = vec![f64::NAN; p.lambda().len()];
        for (i, d, gk, gv) in terms {
            let l = p.lambda()[i];
            objective += l * d;
            distances[i] = d;
            for (g, x) in gradient
                .iter_mut()
                .zip(Controller::flatten_gradient(lf, &gk, &gv))
            {
                *g += l * x;
            }
        }

        let risk = self.risk(z);
        let deltas = self.deltas(&risk);
        let scale = p.options().constraint_scale;
        let g = p.gain_stack();
        let raw: Vec<_> = p
            .prepared()
            .par_iter()
            .zip(deltas.par_iter())
            .map(|(c, &delta)| {
                c.slack_with_gradient(g, &ctrl, p.components(), delta, p.quadrature())
            })
            .collect::<Result<_, _>>()?;
        let mut slacks = Vec::with_capacity(raw.len());
        let mut slack_gradients = Vec::with_capacity(raw.len());
        let softmax_parts = match self.risk {
            RiskParameterization::Softmax {
                state_span,
                input_span,
            } => Some((
                softmax(&z[self.n_ctrl..self.n_ctrl + self.n_x]),
                softmax(&z[self.n_ctrl + self.n_x..]),
                state_span,
                input_span,
            )),
            RiskParameterization::Fixed => None,
        };
        for (idx, sg) in raw.into_iter().enumerate() {
            slacks.push(scale * sg.value);
            let mut grad = Controller::flatten_gradient(lf, &sg.d_gain, &sg.d_feedforward);
            grad.iter_mut().for_each(|x| *x *= scale);
            grad.resize(self.dim(), 0.0);
            if let Some((sx, su, span_x, span_u)) = &softmax_parts {
                // ∂δ_i/∂θ_j = span·s_i(1[i=j] − s_j) within the constraint's group
                let state = p.prepared()[idx].kind == ConstraintKind::State;
                let (s, span, offset, local) = if state {
                    (sx, *span_x, self.n_ctrl, idx)
                } else {
                    (su, *span_u, self.n_ctrl + self.n_x, idx - self.n_x)
                };
                let c = scale * sg.d_delta * span * s[local];
                for (j, sj) in s.iter().enumerate() {
                    let kron = if j == local { 1.0 } else { 0.0 };
                    grad[offset + j] += c * (kron - sj);
                }
            }
            slack_gradients.push(grad);
        }
        if !objective.is_finite() || slacks.iter().any(|s| !s.is_finite()) {
            return Err(SteerError::NumericalBreakdown {
                reason: "non-finite objective or constraint".into(),
                best: None,
            });
        }
        Ok(Evaluation {
            objective,
            gradient,
            cost,
            distances,
            slacks,
            slack_gradients,
        })
    }

    /// Probability margins `P(row ≤ bound) − (1 − δ)` at `z`.
    pub fn margins(&self, z: &[f64]) -> Result<Vec<f64>, SteerError> {
        let p = self.problem;
        let ctrl = self.controller(z)?;
        let deltas = self.deltas(&self.risk(z));
        let g = p.gain_stack();
        Ok(p.prepared()
            .par_iter()
            .zip(deltas.par_iter())
            .map(|(c, &delta)| c.margin(g, &ctrl, p.components(), delta, p.quadrature()))
            .collect::<Result<_, _>>()?)
    }
}
