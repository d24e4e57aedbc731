//! Scenario files (TOML, `schema_version = 1`) and their translation into a
//! [`SteeringProblem`]. The schema is documented in
//! `docs/scenario-schema.md`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use diststeer::cf::{QuadratureSpec, ScalarDist, Truncation};
use diststeer::constraints::Polytope;
use diststeer::lift::LtvSystem;
use diststeer::matching::TargetDensity;
use diststeer::mc::McConfig;
use diststeer::steer::{ProblemSpec, RiskMode, SolverOptions, SteerError, SteeringProblem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("scenario rejected: {0}")]
    Problem(#[from] SteerError),
}

fn field(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub system: SystemSection,
    pub initial: VectorDist,
    pub disturbance: VectorDist,
    #[serde(default)]
    pub state_constraints: Vec<RowSpec>,
    pub state_box: Option<BoxSpec>,
    #[serde(default)]
    pub input_constraints: Vec<RowSpec>,
    pub input_box: Option<BoxSpec>,
    pub thresholds: Thresholds,
    pub weights: Weights,
    pub reference: ReferenceSpec,
    pub target: VectorDist,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub validation: ValidationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSection {
    /// Planar double integrator per axis with state `[p₁ v₁ p₂ v₂ …]`,
    /// inputs are accelerations and `D = disturbance_gain · B`.
    DoubleIntegrator {
        horizon: usize,
        dt: f64,
        #[serde(default = "default_axes")]
        axes: usize,
        #[serde(default = "one")]
        disturbance_gain: f64,
    },
    /// Time-invariant matrices, row-major nested arrays.
    Explicit {
        horizon: usize,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
    /// One `{a, b, d}` table per stage.
    Stages { stages: Vec<StageMatrices> },
}

fn default_axes() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMatrices {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

/// Independent per-coordinate distributions. A mixture lists one mean and
/// one variance vector per mixture component; coordinate `i` becomes the
/// scalar mixture of the `i`-th entries.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorDist {
    Gaussian {
        mean: Vec<f64>,
        variance: Vec<f64>,
    },
    Laplace {
        location: Vec<f64>,
        scale: Vec<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub normal: Vec<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub state: f64,
    pub input: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Diagonal of `Q_k`, `k = 0..N-1`.
    pub q: Vec<f64>,
    /// Diagonal of `R_k`.
    pub r: Vec<f64>,
    /// Diagonal of an optional terminal `Q_N`.
    pub terminal_q: Option<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// What `lambda` multiplies.
    #[serde(default)]
    pub distance_units: DistanceUnits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceUnits {
    /// `D_i = (1/2π)∫|φ_a − φ_b| dt`.
    #[default]
    Normalized,
    /// `∫|φ_a − φ_b| dt`, i.e. `2π D_i`.
    Integral,
}

impl DistanceUnits {
    /// Factor converting a normalized `D_i` into these units.
    pub fn factor(self) -> f64 {
        match self {
            Self::Normalized => 1.0,
            Self::Integral => 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Piecewise-linear positions. Within a segment the reference velocity is
    /// the per-stage displacement over `dt`.
    Waypoints {
        segments: Vec<Segment>,
        position_indices: Vec<usize>,
        velocity_indices: Vec<usize>,
        #[serde(default = "one")]
        dt: f64,
    },
    /// `N + 1` full state vectors.
    Explicit { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    /// Inclusive stage range `[first, last]`.
    pub stages: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationKind {
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub truncation: TruncationKind,
    pub multiplier: f64,
    pub upper: Option<f64>,
    pub nodes_per_unit: usize,
    pub absolute_tolerance: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let d = QuadratureSpec::default();
        let multiplier = match d.truncation {
            Truncation::AutoSixSigma { multiplier } => multiplier,
            Truncation::FixedUpper(_) => 8.0,
        };
        Self {
            truncation: TruncationKind::Auto,
            multiplier,
            upper: None,
            nodes_per_unit: d.nodes_per_unit,
            absolute_tolerance: d.absolute_tolerance,
            max_nodes: d.max_nodes,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskModeSpec {
    Optimize,
    Uniform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub risk_mode: RiskModeSpec,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub feasibility_tolerance: f64,
    pub stationarity_tolerance: f64,
    pub stall_tolerance: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub constraint_scale: f64,
    pub lbfgs_memory: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            risk_mode: RiskModeSpec::Optimize,
            max_outer_iterations: d.max_outer_iterations,
            max_inner_iterations: d.max_inner_iterations,
            feasibility_tolerance: d.feasibility_tolerance,
            stationarity_tolerance: d.stationarity_tolerance,
            stall_tolerance: d.stall_tolerance,
            initial_penalty: d.initial_penalty,
            penalty_growth: d.penalty_growth,
            max_penalty: d.max_penalty,
            constraint_scale: d.constraint_scale,
            lbfgs_memory: d.lbfgs_memory,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
    /// Sample paths written to `trajectories.csv`.
    pub trajectories: usize,
}

impl Default for McSection {
    fn default() -> Self {
        let d = McConfig::default();
        Self {
            samples: d.samples,
            seed: d.seed,
            bins: d.bins,
            trajectories: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSection {
    /// Terminal dimensions whose KS check counts toward the exit status;
    /// all dimensions when absent.
    pub ks_dimensions: Option<Vec<usize>>,
    /// KS limit for the checked dimensions. When absent each dimension
    /// uses `1.36/√M + min(1, D_i)`.
    pub ks_limit: Option<f64>,
    /// Largest accepted `|J − J_MC| / J`; unchecked when absent.
    pub cost_gap: Option<f64>,
    /// Points of the terminal-density grid.
    pub density_points: usize,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self {
            ks_dimensions: None,
            ks_limit: None,
            cost_gap: None,
            density_points: 401,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mc_samples: Option<usize>,
    pub lambda_scale: Option<f64>,
    pub fixed_risk: bool,
}

/// A parsed, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub problem: SteeringProblem,
    pub mc: McConfig,
    /// Hex SHA-256 of the scenario text.
    pub hash: String,
    pub text: String,
    pub overrides: Overrides,
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    file.schema_version
                ),
            ));
        }
        let problem = build_problem(&file, overrides)?;
        check_validation(&file.validation, problem.target().dim())?;
        let mc = McConfig {
            samples: overrides.mc_samples.unwrap_or(file.mc.samples),
            seed: overrides.seed.unwrap_or(file.mc.seed),
            bins: file.mc.bins,
            kept_paths: file.mc.trajectories,
        };
        mc.validate().map_err(|e| field("mc", e.to_string()))?;
        let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
        Ok(Self {
            file,
            problem,
            mc,
            hash,
            text: text.to_owned(),
            overrides: overrides.clone(),
        })
    }
}

fn check_validation(v: &ValidationSection, dim: usize) -> Result<(), ScenarioError> {
    if let Some(dims) = &v.ks_dimensions {
        if let Some(d) = dims.iter().find(|d| **d >= dim) {
            return Err(field(
                "validation.ks_dimensions",
                format!("dimension {d} is out of range for {dim} states"),
            ));
        }
    }
    if let Some(l) = v.ks_limit {
        if !(l > 0.0 && l <= 1.0) {
            return Err(field("validation.ks_limit", "must lie in (0, 1]"));
        }
    }
    if let Some(g) = v.cost_gap {
        if !(g > 0.0 && g.is_finite()) {
            return Err(field("validation.cost_gap", "must be positive"));
        }
    }
    if v.density_points < 2 {
        return Err(field(
            "validation.density_points",
            "needs at least 2 points",
        ));
    }
    Ok(())
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ScenarioError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(field(name, "expected a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn system(s: &SystemSection) -> Result<LtvSystem, ScenarioError> {
    let sys = match s {
        SystemSection::DoubleIntegrator {
            horizon,
            dt,
            axes,
            disturbance_gain,
        } => {
            if !(*dt > 0.0) {
                return Err(field("system.dt", "must be positive"));
            }
            if *axes == 0 {
                return Err(field("system.axes", "must be at least 1"));
            }
            let n = 2 * axes;
            let mut a = DMatrix::zeros(n, n);
            let mut b = DMatrix::zeros(n, *axes);
            for ax in 0..*axes {
                let (p, v) = (2 * ax, 2 * ax + 1);
                a[(p, p)] = 1.0;
                a[(p, v)] = *dt;
                a[(v, v)] = 1.0;
                b[(p, ax)] = 0.5 * dt * dt;
                b[(v, ax)] = *dt;
            }
            let d = &b * *disturbance_gain;
            LtvSystem::time_invariant(a, b, d, *horizon)
        }
        SystemSection::Explicit { horizon, a, b, d } => LtvSystem::time_invariant(
            matrix("system.a", a)?,
            matrix("system.b", b)?,
            matrix("system.d", d)?,
            *horizon,
        ),
        SystemSection::Stages { stages } => {
            let mut a = Vec::new();
            let mut b = Vec::new();
            let mut d = Vec::new();
            for (k, s) in stages.iter().enumerate() {
                a.push(matrix(&format!("system.stages[{k}].a"), &s.a)?);
                b.push(matrix(&format!("system.stages[{k}].b"), &s.b)?);
                d.push(matrix(&format!("system.stages[{k}].d"), &s.d)?);
            }
            LtvSystem::new(a, b, d)
        }
    };
    sys.map_err(|e| field("system", e.to_string()))
}

fn scalars(name: &str, d: &VectorDist, len: usize) -> Result<Vec<ScalarDist>, ScenarioError> {
    let check = |what: &str, v: &[f64]| {
        if v.len() == len {
            Ok(())
        } else {
            Err(field(
                format!("{name}.{what}"),
                format!("expected {len} entries, found {}", v.len()),
            ))
        }
    };
    let at = |what: &str, i: usize, r: Result<ScalarDist, diststeer::cf::CfError>| {
        r.map_err(|e| field(format!("{name}.{what}[{i}]"), e.to_string()))
    };
    match d {
        VectorDist::Gaussian { mean, variance } => {
            check("mean", mean)?;
            check("variance", variance)?;
            (0..len)
                .map(|i| at("variance", i, ScalarDist::gaussian(mean[i], variance[i])))
                .collect()
        }
        VectorDist::Laplace { location, scale } => {
            check("location", location)?;
            check("scale", scale)?;
            (0..len)
                .map(|i| at("scale", i, ScalarDist::laplace(location[i], scale[i])))
                .collect()
        }
        VectorDist::Mixture {
            weights,
            means,
            variances,
        } => {
            if means.len() != weights.len() || variances.len() != weights.len() {
                return Err(field(
                    name,
                    "weights, means and variances need one entry per mixture component",
                ));
            }
            for (j, (m, v)) in means.iter().zip(variances).enumerate() {
                check(&format!("means[{j}]"), m)?;
                check(&format!("variances[{j}]"), v)?;
            }
            (0..len)
                .map(|i| {
                    at(
                        "variances",
                        i,
                        ScalarDist::mixture(
                            weights.clone(),
                            means.iter().map(|m| m[i]).collect(),
                            variances.iter().map(|v| v[i]).collect(),
                        ),
                    )
                })
                .collect()
        }
    }
}

fn polytope(
    name: &str,
    rows: &[RowSpec],
    bx: &Option<BoxSpec>,
    dim: usize,
) -> Result<Polytope, ScenarioError> {
    let mut normals = Vec::new();
    let mut bounds = Vec::new();
    for (j, r) in rows.iter().enumerate() {
        if r.normal.len() != dim {
            return Err(field(
                format!("{name}[{j}].normal"),
                format!("expected {dim} entries"),
            ));
        }
        normals.push(r.normal.clone());
        bounds.push(r.bound);
    }
    if let Some(b) = bx {
        let boxed = Polytope::boxed(&b.lower, &b.upper)
            .map_err(|e| field(format!("{name}_box"), e.to_string()))?;
        if b.lower.len() != dim {
            return Err(field(
                format!("{name}_box"),
                format!("expected {dim} entries"),
            ));
        }
        for (a, v) in boxed.rows() {
            normals.push(a.to_vec());
            bounds.push(v);
        }
    }
    Polytope::new(normals, bounds).map_err(|e| field(name, e.to_string()))
}

fn diag(name: &str, v: &[f64], len: usize) -> Result<DMatrix<f64>, ScenarioError> {
    if v.len() != len {
        return Err(field(name, format!("expected {len} diagonal entries")));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
}

fn reference(r: &ReferenceSpec, horizon: usize, n: usize) -> Result<DVector<f64>, ScenarioError> {
    let mut x = DVector::zeros((horizon + 1) * n);
    match r {
        ReferenceSpec::Explicit { states } => {
            if states.len() != horizon + 1 || states.iter().any(|s| s.len() != n) {
                return Err(field(
                    "reference.states",
                    format!("expected {} vectors of length {n}", horizon + 1),
                ));
            }
            for (k, s) in states.iter().enumerate() {
                x.rows_mut(k * n, n).copy_from_slice(s);
            }
        }
        ReferenceSpec::Waypoints {
            segments,
            position_indices,
            velocity_indices,
            dt,
        } => {
            let dim = position_indices.len();
            if velocity_indices.len() != dim
                || position_indices
                    .iter()
                    .chain(velocity_indices)
                    .any(|i| *i >= n)
            {
                return Err(field(
                    "reference",
                    "position/velocity indices must pair up and lie below n",
                ));
            }
            if !(*dt > 0.0) {
                return Err(field("reference.dt", "must be positive"));
            }
            let mut covered = vec![false; horizon + 1];
            for (s, seg) in segments.iter().enumerate() {
                let [k0, k1] = seg.stages;
                if seg.from.len() != dim || seg.to.len() != dim || k1 < k0 || k1 > horizon {
                    return Err(field(
                        format!("reference.segments[{s}]"),
                        "bad waypoint length or stage range",
                    ));
                }
                let span = (k1 - k0).max(1) as f64;
                for k in k0..=k1 {
                    if covered[k] {
                        return Err(field(
                            format!("reference.segments[{s}]"),
                            format!("stage {k} covered twice"),
                        ));
                    }
                    covered[k] = true;
                    let frac = (k - k0) as f64 / span;
                    for d in 0..dim {
                        let step = (seg.to[d] - seg.from[d]) / span;
                        x[k * n + position_indices[d]] =
                            seg.from[d] + frac * (seg.to[d] - seg.from[d]);
                        x[k * n + velocity_indices[d]] = step / dt;
                    }
                }
            }
            if let Some(k) = covered.iter().position(|c| !c) {
                return Err(field(
                    "reference.segments",
                    format!("stage {k} has no waypoint segment"),
                ));
            }
        }
    }
    Ok(x)
}

fn quadrature(q: &QuadratureSection) -> Result<QuadratureSpec, ScenarioError> {
    let truncation = match q.truncation {
        TruncationKind::Auto => Truncation::AutoSixSigma {
            multiplier: q.multiplier,
        },
        TruncationKind::Fixed => Truncation::FixedUpper(
            q.upper
                .ok_or_else(|| field("quadrature.upper", "required for fixed truncation"))?,
        ),
    };
    let spec = QuadratureSpec {
        truncation,
        nodes_per_unit: q.nodes_per_unit,
        absolute_tolerance: q.absolute_tolerance,
        max_nodes: q.max_nodes,
    };
    spec.validate()
        .map_err(|e| field("quadrature", e.to_string()))?;
    Ok(spec)
}

fn build_problem(f: &ScenarioFile, o: &Overrides) -> Result<SteeringProblem, ScenarioError> {
    let system = system(&f.system)?;
    let (n, m, p) = system.dims();
    let horizon = system.horizon();
    let initial = scalars("initial", &f.initial, n)?;
    let per_stage = scalars("disturbance", &f.disturbance, p)?;
    let disturbance = (0..horizon)
        .flat_map(|_| per_stage.iter().cloned())
        .collect();
    let q = diag("weights.q", &f.weights.q, n)?;
    let r = diag("weights.r", &f.weights.r, m)?;
    let mut state_weights = vec![q; horizon];
    if let Some(t) = &f.weights.terminal_q {
        state_weights.push(diag("weights.terminal_q", t, n)?);
    }
    if f.weights.lambda.len() != n {
        return Err(field("weights.lambda", format!("expected {n} entries")));
    }
    let user_scale = o.lambda_scale.unwrap_or(1.0);
    if !(user_scale >= 0.0 && user_scale.is_finite()) {
        return Err(field("--lambda-scale", "must be finite and nonnegative"));
    }
    let scale = user_scale * f.weights.distance_units.factor();
    let s = &f.solver;
    let options = SolverOptions {
        risk_mode: match (o.fixed_risk, &s.risk_mode) {
            (true, _) | (false, RiskModeSpec::Uniform) => RiskMode::Uniform,
            (false, RiskModeSpec::Optimize) => RiskMode::Optimize,
        },
        max_outer_iterations: s.max_outer_iterations,
        max_inner_iterations: s.max_inner_iterations,
        feasibility_tolerance: s.feasibility_tolerance,
        stationarity_tolerance: s.stationarity_tolerance,
        stall_tolerance: s.stall_tolerance,
        initial_penalty: s.initial_penalty,
        penalty_growth: s.penalty_growth,
        max_penalty: s.max_penalty,
        constraint_scale: s.constraint_scale,
        lbfgs_memory: s.lbfgs_memory,
    };
    let spec = ProblemSpec {
        initial,
        disturbance,
        state_polytope: polytope("state_constraints", &f.state_constraints, &f.state_box, n)?,
        input_polytope: polytope("input_constraints", &f.input_constraints, &f.input_box, m)?,
        state_risk: f.thresholds.state,
        input_risk: f.thresholds.input,
        state_weights,
        input_weights: vec![r; horizon],
        reference: reference(&f.reference, horizon, n)?,
        target: TargetDensity::new(scalars("target", &f.target, n)?)
            .map_err(|e| field("target", e.to_string()))?,
        lambda: f.weights.lambda.iter().map(|l| l * scale).collect(),
        quadrature: quadrature(&f.quadrature)?,
        options,
        system,
    };
    Ok(SteeringProblem::new(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[system]
kind = "double_integrator"
horizon = 2
dt = 1.0
axes = 1
[initial]
kind = "gaussian"
mean = [0.0, 0.0]
variance = [0.1, 0.01]
[disturbance]
kind = "gaussian"
mean = [0.0]
variance = [1.0]
[thresholds]
state = 0.1
input = 0.1
[weights]
q = [1.0, 1.0]
r = [1.0]
lambda = [1.0, 0.0]
[reference]
kind = "waypoints"
position_indices = [0]
velocity_indices = [1]
segments = [{ from = [0.0], to = [2.0], stages = [0, 2] }]
[target]
kind = "gaussian"
mean = [2.0, 0.0]
variance = [0.5, 0.5]
"#;

    #[test]
    fn parses_minimal_file() {
        let s = Scenario::parse(MINIMAL, &Overrides::default()).unwrap();
        let lf = s.problem.lifted();
        assert_eq!(lf.dims(), (2, 1, 1));
        assert_eq!(
            s.problem.spec().reference.as_slice(),
            &[0.0, 1.0, 1.0, 1.0, 2.0, 1.0]
        );
        assert_eq!(s.hash.len(), 64);
        assert_eq!(s.mc.samples, 10_000);
    }

    #[test]
    fn overrides_apply() {
        let o = Overrides {
            seed: Some(7),
            mc_samples: Some(500),
            lambda_scale: Some(3.0),
            fixed_risk: true,
        };
        let s = Scenario::parse(MINIMAL, &o).unwrap();
        assert_eq!((s.mc.seed, s.mc.samples), (7, 500));
        assert_eq!(s.problem.lambda(), &[3.0, 0.0]);
        assert_eq!(s.problem.options().risk_mode, RiskMode::Uniform);
    }

    #[test]
    fn negative_scale_names_the_field() {
        let text = MINIMAL.replace(
            "[disturbance]\nkind = \"gaussian\"\nmean = [0.0]\nvariance = [1.0]",
            "[disturbance]\nkind = \"laplace\"\nlocation = [0.0]\nscale = [-1.0]",
        );
        let err = Scenario::parse(&text, &Overrides::default()).unwrap_err();
        assert!(err.to_string().starts_with("disturbance.scale[0]"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("[thresholds]", "[thresholds]\nstat = 0.1");
        let err = Scenario::parse(&text, &Overrides::default()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::Syntax(_)));
        assert!(msg.contains("line") && msg.contains("stat"), "{msg}");
    }

    #[test]
    fn uncovered_stage_is_reported() {
        let text = MINIMAL.replace("stages = [0, 2]", "stages = [0, 1]");
        let err = Scenario::parse(&text, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("stage 2"), "{err}");
    }

    #[test]
    fn mixture_is_split_per_coordinate() {
        let text = MINIMAL.replace(
            "[initial]\nkind = \"gaussian\"\nmean = [0.0, 0.0]\nvariance = [0.1, 0.01]",
            "[initial]\nkind = \"mixture\"\nweights = [0.5, 0.5]\nmeans = [[0.0, 0.0], [1.0, 0.2]]\nvariances = [[0.1, 0.01], [0.2, 0.02]]",
        );
        let s = Scenario::parse(&text, &Overrides::default()).unwrap();
        let c = &s.problem.components()[1];
        assert!((c.mean() - 0.1).abs() < 1e-15);
    }
}
