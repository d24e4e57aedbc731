use nalgebra::{DMatrix, DVector};

use super::{SolverOptions, SteerError};
use crate::cf::{QuadratureSpec, ScalarDist};
use crate::constraints::{
    boole_decompose, gain_stack, ConstraintKind, HalfspaceConstraint, Polytope, PreparedConstraint,
};
use rayon::prelude::*;

use crate::constraints::RiskAllocation;
use crate::lift::{lift, Controller, LiftedSystem, LtvSystem};
use crate::matching::TargetDensity;

/// Everything needed to pose a steering problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub system: LtvSystem,
    /// One independent component per state coordinate of `x₀`.
    pub initial: Vec<ScalarDist>,
    /// `N·p` components of `W`, stage-major.
    pub disturbance: Vec<ScalarDist>,
    pub state_polytope: Polytope,
    pub input_polytope: Polytope,
    pub state_risk: f64,
    pub input_risk: f64,
    /// `Q_0..Q_{N-1}`, optionally followed by a terminal `Q_N`.
    pub state_weights: Vec<DMatrix<f64>>,
    /// `R_0..R_{N-1}`.
    pub input_weights: Vec<DMatrix<f64>>,
    /// `X_d` of length `(N+1)n`.
    pub reference: DVector<f64>,
    pub target: TargetDensity,
    pub lambda: Vec<f64>,
    pub quadrature: QuadratureSpec,
    pub options: SolverOptions,
}

/// A validated [`ProblemSpec`] with the lifted system and stacked weights.
#[derive(Debug, Clone)]
pub struct SteeringProblem {
    spec: ProblemSpec,
    lifted: LiftedSystem,
    components: Vec<ScalarDist>,
    constraints: Vec<HalfspaceConstraint>,
    prepared: Vec<PreparedConstraint>,
    gain_stack: DMatrix<f64>,
    q_cal: DMatrix<f64>,
    r_cal: DMatrix<f64>,
    mean: DVector<f64>,
    sigma: DMatrix<f64>,
}

fn invalid(msg: impl Into<String>) -> SteerError {
    SteerError::InvalidProblem(msg.into())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl SteeringProblem {
    pub fn new(spec: ProblemSpec) -> Result<Self, SteerError> {
        let lifted = lift(&spec.system);
        let (n, m, _) = lifted.dims();
        let horizon = lifted.horizon();
        if spec.initial.len() != n {
            return Err(invalid(format!(
                "{} initial components for n = {n}",
                spec.initial.len()
            )));
        }
        if spec.disturbance.len() != lifted.disturbance_len() {
            return Err(invalid(format!(
                "{} disturbance components, expected N·p = {}",
                spec.disturbance.len(),
                lifted.disturbance_len()
            )));
        }
        for d in spec.initial.iter().chain(&spec.disturbance) {
            d.validate()?;
        }
        if spec.target.dim() != n {
            return Err(invalid(format!(
                "target has {} marginals for n = {n}",
                spec.target.dim()
            )));
        }
        if spec.lambda.len() != n || spec.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(invalid("lambda needs n finite nonnegative entries"));
        }
        for (name, r) in [("state", spec.state_risk), ("input", spec.input_risk)] {
            if !(0.0..1.0).contains(&r) {
                return Err(invalid(format!("{name} risk budget {r} outside [0, 1)")));
            }
        }
        if !spec.state_polytope.is_empty() && spec.state_polytope.rows().any(|(a, _)| a.len() != n)
        {
            return Err(invalid("state constraint rows must have length n"));
        }
        if !spec.input_polytope.is_empty() && spec.input_polytope.rows().any(|(a, _)| a.len() != m)
        {
            return Err(invalid("input constraint rows must have length m"));
        }
        let x0_mean: Vec<f64> = spec.initial.iter().map(ScalarDist::mean).collect();
        if !spec.state_polytope.contains(&x0_mean) {
            return Err(invalid("mean of x0 lies outside the state polytope"));
        }
        let q_len = spec.state_weights.len();
        if q_len != horizon && q_len != horizon + 1 {
            return Err(invalid(format!(
                "{q_len} state weights for horizon {horizon}"
            )));
        }
        if spec.input_weights.len() != horizon {
            return Err(invalid(format!(
                "{} input weights for horizon {horizon}",
                spec.input_weights.len()
            )));
        }
        let mut q_cal = DMatrix::zeros(lifted.state_len(), lifted.state_len());
        for (k, q) in spec.state_weights.iter().enumerate() {
            if q.shape() != (n, n) || !is_symmetric(q) {
                return Err(invalid(format!("Q_{k} must be a symmetric {n}x{n} matrix")));
            }
            if q.clone().symmetric_eigenvalues().min() < -1e-12 * q.amax().max(1.0) {
                return Err(invalid(format!("Q_{k} is not positive semidefinite")));
            }
            q_cal.view_mut((k * n, k * n), (n, n)).copy_from(q);
        }
        let mut r_cal = DMatrix::zeros(lifted.input_len(), lifted.input_len());
        for (k, r) in spec.input_weights.iter().enumerate() {
            if r.shape() != (m, m) || !is_symmetric(r) || r.clone().cholesky().is_none() {
                return Err(invalid(format!(
                    "R_{k} must be a symmetric positive definite {m}x{m} matrix"
                )));
            }
            r_cal.view_mut((k * m, k * m), (m, m)).copy_from(r);
        }
        if spec.reference.len() != lifted.state_len() {
            return Err(invalid(format!(
                "reference has {} entries, expected (N+1)n = {}",
                spec.reference.len(),
                lifted.state_len()
            )));
        }
        spec.quadrature.validate()?;
        let o = &spec.options;
        if o.max_outer_iterations == 0
            || o.max_inner_iterations == 0
            || !(o.feasibility_tolerance > 0.0)
            || !(o.initial_penalty > 0.0)
            || !(o.penalty_growth > 1.0)
            || !(o.max_penalty >= o.initial_penalty)
            || !(o.constraint_scale > 0.0)
            || o.lbfgs_memory == 0
        {
            return Err(invalid("solver options out of range"));
        }

        let components: Vec<ScalarDist> = spec
            .initial
            .iter()
            .chain(&spec.disturbance)
            .cloned()
            .collect();
        let constraints = boole_decompose(&spec.state_polytope, &spec.input_polytope, horizon)?;
        let prepared = constraints
            .iter()
            .map(|c| PreparedConstraint::new(c, &lifted))
            .collect::<Result<Vec<_>, _>>()?;
        let z_mean =
            DVector::from_iterator(components.len(), components.iter().map(ScalarDist::mean));
        let z_var = DVector::from_iterator(
            components.len(),
            components.iter().map(ScalarDist::variance),
        );
        let g = gain_stack(&lifted);
        let mean = &g * z_mean;
        let sigma = &g * DMatrix::from_diagonal(&z_var) * g.transpose();
        Ok(Self {
            spec,
            lifted,
            components,
            constraints,
            prepared,
            gain_stack: g,
            q_cal,
            r_cal,
            mean,
            sigma,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn lifted(&self) -> &LiftedSystem {
        &self.lifted
    }

    /// `[x₀; W]` components in lifted order.
    pub fn components(&self) -> &[ScalarDist] {
        &self.components
    }

    /// Boole-decomposed constraints: state rows for `k = 1..=N`, then input
    /// rows for `k = 0..N-1`.
    pub fn constraints(&self) -> &[HalfspaceConstraint] {
        &self.constraints
    }

    pub(crate) fn prepared(&self) -> &[PreparedConstraint] {
        &self.prepared
    }

    /// `[𝒜 𝒟]`.
    pub fn gain_stack(&self) -> &DMatrix<f64> {
        &self.gain_stack
    }

    pub fn state_constraint_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| c.kind() == ConstraintKind::State)
            .count()
    }

    pub fn input_constraint_count(&self) -> usize {
        self.constraints.len() - self.state_constraint_count()
    }

    /// 𝒬
    pub fn q_cal(&self) -> &DMatrix<f64> {
        &self.q_cal
    }

    /// ℛ
    pub fn r_cal(&self) -> &DMatrix<f64> {
        &self.r_cal
    }

    /// `𝒜E[x₀] + 𝒟E[W]`.
    pub fn open_loop_mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `𝒜Σ_{x₀}𝒜ᵀ + 𝒟Σ_W𝒟ᵀ`.
    pub fn open_loop_covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn target(&self) -> &TargetDensity {
        &self.spec.target
    }

    pub fn lambda(&self) -> &[f64] {
        &self.spec.lambda
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.spec.quadrature
    }

    pub fn options(&self) -> &SolverOptions {
        &self.spec.options
    }

    /// Same problem with every `λ_i` multiplied by `scale`.
    pub fn with_lambda_scale(&self, scale: f64) -> Result<Self, SteerError> {
        let mut spec = self.spec.clone();
        spec.lambda.iter_mut().for_each(|l| *l *= scale);
        Self::new(spec)
    }

    /// Probability margins `P(row ≤ bound) − (1 − δ)` for every Boole
    /// constraint at `ctrl` under `risk`.
    pub fn margins(
        &self,
        ctrl: &Controller,
        risk: &RiskAllocation,
    ) -> Result<Vec<f64>, SteerError> {
        let deltas: Vec<f64> = risk.state.iter().chain(&risk.input).copied().collect();
        if deltas.len() != self.prepared.len() {
            return Err(SteerError::InvalidProblem(format!(
                "{} risk shares for {} constraints",
                deltas.len(),
                self.prepared.len()
            )));
        }
        Ok(self
            .prepared
            .par_iter()
            .zip(deltas.par_iter())
            .map(|(c, &delta)| {
                c.margin(
                    &self.gain_stack,
                    ctrl,
                    &self.components,
                    delta,
                    &self.spec.quadrature,
                )
            })
            .collect::<Result<_, _>>()?)
    }

    pub fn with_options(&self, options: SolverOptions) -> Result<Self, SteerError> {
        let mut spec = self.spec.clone();
        spec.options = options;
        Self::new(spec)
    }
}
