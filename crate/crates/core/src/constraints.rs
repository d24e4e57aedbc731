//! Polytopic chance constraints split per hyperplane with Boole's
//! inequality and evaluated through Gil-Pelaez inversion.

use nalgebra::{DMatrix, DVector, RowDVector};
use thiserror::Error;

use crate::cf::inversion::quantile_with_gradient;
use crate::cf::{gil_pelaez_cdf, CfError, LinComboCF, QuadratureSpec, ScalarDist};
use crate::lift::{Controller, LiftError, LiftedSystem};

/// Smallest risk share assigned to any single constraint.
pub const DELTA_MIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("invalid constraint: {0}")]
    Invalid(String),
    #[error("invalid risk allocation: {0}")]
    Risk(String),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Cf(#[from] CfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    State,
    Input,
}

/// One row `normalᵀ z ≤ bound` applied to `x_stage` or `u_stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceConstraint {
    normal: Vec<f64>,
    bound: f64,
    stage: usize,
    kind: ConstraintKind,
}

impl HalfspaceConstraint {
    pub fn new(
        kind: ConstraintKind,
        normal: Vec<f64>,
        bound: f64,
        stage: usize,
    ) -> Result<Self, ConstraintError> {
        if normal.iter().any(|x| !x.is_finite()) || !bound.is_finite() {
            return Err(ConstraintError::Invalid(
                "normal and bound must be finite".into(),
            ));
        }
        if normal.iter().all(|x| *x == 0.0) {
            return Err(ConstraintError::Invalid("normal must be nonzero".into()));
        }
        Ok(Self {
            normal,
            bound,
            stage,
            kind,
        })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    /// Selector row over `X` (state) or `U` (input).
    pub fn row(&self, lift: &LiftedSystem) -> Result<RowDVector<f64>, ConstraintError> {
        let (n, m, _) = lift.dims();
        match self.kind {
            ConstraintKind::State => {
                if self.normal.len() != n || self.stage > lift.horizon() {
                    return Err(ConstraintError::Invalid(format!(
                        "state row of length {} at stage {}",
                        self.normal.len(),
                        self.stage
                    )));
                }
                Ok(lift.state_row(&self.normal, self.stage))
            }
            ConstraintKind::Input => {
                if self.normal.len() != m || self.stage >= lift.horizon() {
                    return Err(ConstraintError::Invalid(format!(
                        "input row of length {} at stage {}",
                        self.normal.len(),
                        self.stage
                    )));
                }
                Ok(lift.input_row(&self.normal, self.stage))
            }
        }
    }
}

/// Stage-independent polytope `{z : normal_jᵀ z ≤ bound_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    normals: Vec<Vec<f64>>,
    bounds: Vec<f64>,
}

impl Polytope {
    pub fn new(normals: Vec<Vec<f64>>, bounds: Vec<f64>) -> Result<Self, ConstraintError> {
        if normals.len() != bounds.len() {
            return Err(ConstraintError::Invalid(format!(
                "{} normals but {} bounds",
                normals.len(),
                bounds.len()
            )));
        }
        if let Some(first) = normals.first() {
            if normals.iter().any(|r| r.len() != first.len()) {
                return Err(ConstraintError::Invalid("rows of different lengths".into()));
            }
        }
        Ok(Self { normals, bounds })
    }

    /// Axis-aligned box `lower ≤ z ≤ upper` as `2·dim` rows.
    pub fn boxed(lower: &[f64], upper: &[f64]) -> Result<Self, ConstraintError> {
        if lower.len() != upper.len() || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
            return Err(ConstraintError::Invalid(
                "box needs lower < upper in every coordinate".into(),
            ));
        }
        let dim = lower.len();
        let mut normals = Vec::with_capacity(2 * dim);
        let mut bounds = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            normals.push(e.clone());
            bounds.push(upper[i]);
            e[i] = -1.0;
            normals.push(e);
            bounds.push(-lower[i]);
        }
        Self::new(normals, bounds)
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.normals
            .iter()
            .map(Vec::as_slice)
            .zip(self.bounds.iter().copied())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.rows()
            .all(|(a, b)| a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>() <= b)
    }
}

/// One constraint per `(row, stage)`: state rows at `k = 1..=N` and input
/// rows at `k = 0..N-1`, state constraints first.
pub fn boole_decompose(
    state: &Polytope,
    input: &Polytope,
    horizon: usize,
) -> Result<Vec<HalfspaceConstraint>, ConstraintError> {
    let mut out = Vec::with_capacity(state.len() * horizon + input.len() * horizon);
    for k in 1..=horizon {
        for (a, b) in state.rows() {
            out.push(HalfspaceConstraint::new(
                ConstraintKind::State,
                a.to_vec(),
                b,
                k,
            )?);
        }
    }
    for k in 0..horizon {
        for (a, b) in input.rows() {
            out.push(HalfspaceConstraint::new(
                ConstraintKind::Input,
                a.to_vec(),
                b,
                k,
            )?);
        }
    }
    Ok(out)
}

/// Per-constraint risk shares with their totals.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskAllocation {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub total_state: f64,
    pub total_input: f64,
}

impl RiskAllocation {
    pub fn uniform(
        state_count: usize,
        input_count: usize,
        total_state: f64,
        total_input: f64,
    ) -> Self {
        let share = |total: f64, count: usize| {
            vec![
                if count == 0 {
                    0.0
                } else {
                    total / count as f64
                };
                count
            ]
        };
        Self {
            state: share(total_state, state_count),
            input: share(total_input, input_count),
            total_state,
            total_input,
        }
    }

    pub fn state_sum(&self) -> f64 {
        self.state.iter().sum()
    }

    pub fn input_sum(&self) -> f64 {
        self.input.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        for (name, total) in [("state", self.total_state), ("input", self.total_input)] {
            if !(0.0..1.0).contains(&total) {
                return Err(ConstraintError::Risk(format!(
                    "{name} risk budget {total} outside [0, 1)"
                )));
            }
        }
        if self
            .state
            .iter()
            .chain(&self.input)
            .any(|d| !(*d >= 0.0 && *d < 1.0))
        {
            return Err(ConstraintError::Risk(
                "every share must lie in [0, 1)".into(),
            ));
        }
        let slack = 1e-12;
        if self.state_sum() > self.total_state + slack {
            return Err(ConstraintError::Risk(format!(
                "state shares sum to {} > {}",
                self.state_sum(),
                self.total_state
            )));
        }
        if self.input_sum() > self.total_input + slack {
            return Err(ConstraintError::Risk(format!(
                "input shares sum to {} > {}",
                self.input_sum(),
                self.total_input
            )));
        }
        Ok(())
    }
}

/// `P(y ≤ bound) − (1 − δ)`, with the point-mass case compared directly.
pub fn cc_margin(
    hc: &HalfspaceConstraint,
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &[ScalarDist],
    delta: f64,
    q: &QuadratureSpec,
) -> Result<f64, ConstraintError> {
    let set = PreparedConstraint::new(hc, lift)?;
    let g = gain_stack(lift);
    let lc = set.lincombo(&g, ctrl, components)?;
    margin_of(&lc, hc.bound, delta, q)
}

/// [`cc_margin`] for a state row.
pub fn state_cc_margin(
    hc: &HalfspaceConstraint,
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &[ScalarDist],
    delta: f64,
    q: &QuadratureSpec,
) -> Result<f64, ConstraintError> {
    if hc.kind != ConstraintKind::State {
        return Err(ConstraintError::Invalid(
            "expected a state constraint".into(),
        ));
    }
    cc_margin(hc, lift, ctrl, components, delta, q)
}

/// [`cc_margin`] for an input row.
pub fn input_cc_margin(
    hc: &HalfspaceConstraint,
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &[ScalarDist],
    delta: f64,
    q: &QuadratureSpec,
) -> Result<f64, ConstraintError> {
    if hc.kind != ConstraintKind::Input {
        return Err(ConstraintError::Invalid(
            "expected an input constraint".into(),
        ));
    }
    cc_margin(hc, lift, ctrl, components, delta, q)
}

fn margin_of(
    lc: &LinComboCF<'_>,
    bound: f64,
    delta: f64,
    q: &QuadratureSpec,
) -> Result<f64, ConstraintError> {
    match gil_pelaez_cdf(lc, bound, q) {
        Ok(p) => Ok(p - (1.0 - delta)),
        Err(CfError::DegenerateDistribution { value }) => {
            Ok(if value <= bound { delta } else { delta - 1.0 })
        }
        Err(e) => Err(e.into()),
    }
}

/// `[𝒜 𝒟]`, mapping `[x₀; W]` to the open-loop part of `X`.
pub fn gain_stack(lift: &LiftedSystem) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(lift.state_len(), lift.random_len());
    g.columns_mut(0, lift.a().ncols()).copy_from(lift.a());
    g.columns_mut(lift.a().ncols(), lift.d().ncols())
        .copy_from(lift.d());
    g
}

/// A constraint reduced to `y = (base + qᵀK G)·[x₀; W] + qᵀv` where
/// `G = [𝒜 𝒟]`: for state rows `r = αᵀE_k`, `base = rG` and `q = ℬᵀrᵀ`;
/// for input rows `s = aᵀF_k`, `base = 0` and `q = sᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedConstraint {
    pub kind: ConstraintKind,
    pub stage: usize,
    pub bound: f64,
    base: RowDVector<f64>,
    q: DVector<f64>,
}

/// Quantile-form slack `bound − Q_y(1 − δ)` with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackGradient {
    pub value: f64,
    pub d_gain: DMatrix<f64>,
    pub d_feedforward: DVector<f64>,
    pub d_delta: f64,
}

impl PreparedConstraint {
    pub fn new(hc: &HalfspaceConstraint, lift: &LiftedSystem) -> Result<Self, ConstraintError> {
        let row = hc.row(lift)?;
        let (base, q) = match hc.kind {
            ConstraintKind::State => (&row * gain_stack(lift), (&row * lift.b()).transpose()),
            ConstraintKind::Input => (RowDVector::zeros(lift.random_len()), row.transpose()),
        };
        Ok(Self {
            kind: hc.kind,
            stage: hc.stage,
            bound: hc.bound,
            base,
            q,
        })
    }

    pub fn lincombo<'a>(
        &self,
        g: &DMatrix<f64>,
        ctrl: &Controller,
        components: &'a [ScalarDist],
    ) -> Result<LinComboCF<'a>, ConstraintError> {
        let qk = self.q.transpose() * ctrl.gain();
        let coefficients = &self.base + qk * g;
        let offset = self.q.dot(ctrl.feedforward());
        Ok(LinComboCF::new(
            coefficients.iter().copied().collect(),
            components,
            offset,
        )?)
    }

    pub fn margin(
        &self,
        g: &DMatrix<f64>,
        ctrl: &Controller,
        components: &[ScalarDist],
        delta: f64,
        q: &QuadratureSpec,
    ) -> Result<f64, ConstraintError> {
        margin_of(&self.lincombo(g, ctrl, components)?, self.bound, delta, q)
    }

    /// `bound − Q_y(1 − δ)`; nonnegative exactly when the margin is.
    pub fn slack_with_gradient(
        &self,
        g: &DMatrix<f64>,
        ctrl: &Controller,
        components: &[ScalarDist],
        delta: f64,
        q: &QuadratureSpec,
    ) -> Result<SlackGradient, ConstraintError> {
        let lc = self.lincombo(g, ctrl, components)?;
        let qg = quantile_with_gradient(&lc, 1.0 - delta, q)?;
        let dc = DVector::from_column_slice(&qg.d_coefficients);
        // ∂Q/∂K = q ⊗ (G ∂Q/∂c), ∂Q/∂v = q ∂Q/∂g
        let gdc = g * dc;
        Ok(SlackGradient {
            value: self.bound - qg.value,
            d_gain: -(&self.q * gdc.transpose()),
            d_feedforward: -(&self.q * qg.d_offset),
            d_delta: qg.d_p,
        })
    }
}
