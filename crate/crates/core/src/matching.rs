//! Terminal density matching through L1 distances between characteristic
//! functions, and the pdf deviations they bound.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::cf::lincombo::Scratch;
use crate::cf::quadrature::Grid;
use crate::cf::{CfError, CfTable, LinComboCF, QuadratureSpec, ScalarDist};
use crate::lift::{state_map, AffineMap, Controller, LiftError, LiftedSystem};

/// Points in the pdf comparison grid.
pub const SUP_GRID_POINTS: usize = 2001;
/// Half-width, in standard deviations, of the pdf comparison grid.
pub const SUP_GRID_SIGMAS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("terminal component {0} out of range")]
    Component(usize),
    #[error(
        "terminal component {component} is almost surely constant, so its CF distance diverges"
    )]
    NotIntegrable { component: usize },
    #[error("target has {target} marginals for a {state}-dimensional state")]
    TargetDimension { target: usize, state: usize },
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Cf(#[from] CfError),
}

/// Desired terminal density with independent marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDensity {
    marginals: Vec<ScalarDist>,
}

impl TargetDensity {
    pub fn new(marginals: Vec<ScalarDist>) -> Result<Self, MatchError> {
        for d in &marginals {
            d.validate()?;
            if d.variance() <= 0.0 {
                return Err(CfError::InvalidParameter(
                    "target marginals need positive variance".into(),
                )
                .into());
            }
        }
        Ok(Self { marginals })
    }

    pub fn marginals(&self) -> &[ScalarDist] {
        &self.marginals
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    /// Target marginal `i` as a single-component linear combination.
    pub fn marginal_cf(&self, i: usize) -> LinComboCF<'_> {
        LinComboCF::new(vec![1.0], std::slice::from_ref(&self.marginals[i]), 0.0)
            .expect("one coefficient for one component")
    }
}

/// Per-dimension matching diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub distances: Vec<f64>,
    pub sup_deviations: Vec<f64>,
    pub joint_bound: f64,
}

impl MatchReport {
    /// Dimensions where the pdf deviation exceeds its distance bound by more
    /// than `tol`.
    pub fn bound_violations(&self, tol: f64) -> Vec<usize> {
        (0..self.distances.len())
            .filter(|&i| !(self.sup_deviations[i] <= self.distances[i] + tol))
            .collect()
    }
}

/// `x_{N,i}` as a linear combination of `[x₀; W]`.
pub fn terminal_marginal_cf<'a>(
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &'a [ScalarDist],
    i: usize,
) -> Result<LinComboCF<'a>, MatchError> {
    let sm = state_map(lift, ctrl)?;
    terminal_from_map(lift, &sm, components, i)
}

pub(crate) fn terminal_from_map<'a>(
    lift: &LiftedSystem,
    sm: &AffineMap,
    components: &'a [ScalarDist],
    i: usize,
) -> Result<LinComboCF<'a>, MatchError> {
    let (n, _, _) = lift.dims();
    if i >= n {
        return Err(MatchError::Component(i));
    }
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    Ok(crate::lift::lincombo_of_row(
        &lift.state_row(&e, lift.horizon()),
        sm,
        components,
    )?)
}

fn distance_grid(a: &LinComboCF<'_>, b: &LinComboCF<'_>, q: &QuadratureSpec) -> Grid {
    let (sa, sb) = (a.std_dev(), b.std_dev());
    let fine = sa.max(sb).max((a.mean() - b.mean()).abs());
    let coarse = sa.min(sb);
    q.distance_grid(fine, coarse, |t| a.envelope(t).max(b.envelope(t)))
}

/// `(1/2π) ∫_ℝ |φ_a(t) − φ_b(t)| dt`.
pub fn cf_l1_distance(
    a: &LinComboCF<'_>,
    b: &LinComboCF<'_>,
    q: &QuadratureSpec,
) -> Result<f64, CfError> {
    q.validate()?;
    a.ensure_nondegenerate()?;
    b.ensure_nondegenerate()?;
    let (ka, kb) = (a.kernel(), b.kernel());
    let shift = kb.mean() - ka.mean();
    let grid = distance_grid(a, b, q);
    let sum: f64 = (0..grid.len())
        .map(|k| {
            let t = grid.node(k);
            grid.weight(k)
                * (ka.centered(t) - Complex64::from_polar(1.0, t * shift) * kb.centered(t)).norm()
        })
        .sum();
    Ok((sum + endpoint_correction(&grid, shift)) / PI)
}

/// `|φa − φb|` has slope `|μa − μb|` at the origin and is not smooth there
/// as an even function, so the plain trapezoid rule is only second order.
/// Adds the leading Euler-Maclaurin term `h²/12 · f'(0)`.
fn endpoint_correction(grid: &Grid, shift: f64) -> f64 {
    grid.step * grid.step / 12.0 * shift.abs()
}

/// [`cf_l1_distance`] with derivatives in the coefficients and offset of `a`.
pub fn cf_l1_distance_gradient(
    a: &LinComboCF<'_>,
    b: &LinComboCF<'_>,
    q: &QuadratureSpec,
) -> Result<(f64, Vec<f64>, f64), CfError> {
    q.validate()?;
    a.ensure_nondegenerate()?;
    b.ensure_nondegenerate()?;
    let (ka, kb) = (a.kernel(), b.kernel());
    let shift = kb.mean() - ka.mean();
    let grid = distance_grid(a, b, q);
    let mut dc = vec![0.0; a.coefficients().len()];
    let mut dg = 0.0;
    let mut scratch = Scratch::default();
    let mut sum = 0.0;
    for k in 0..grid.len() {
        let t = grid.node(k);
        let w = grid.weight(k) / PI;
        let diff = ka.centered(t) - Complex64::from_polar(1.0, t * shift) * kb.centered(t);
        let norm = diff.norm();
        sum += w * norm;
        if norm > 0.0 {
            // ∂|φa − φb| = Re(conj(Δ)/|Δ| · e^{-itμa} ∂φa)
            ka.accumulate(t, diff.conj() * (w / norm), &mut scratch, &mut dc, &mut dg);
        }
    }
    // the correction depends on μa through |μa − μb|
    let slope = -shift.signum() * grid.step * grid.step / (12.0 * PI);
    if shift != 0.0 {
        for (g, m) in dc.iter_mut().zip(ka.component_means()) {
            *g += slope * m;
        }
        dg += slope;
    }
    Ok((sum + endpoint_correction(&grid, shift) / PI, dc, dg))
}

/// `D_i` for terminal dimension `i`.
pub fn marginal_distance(
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &[ScalarDist],
    target: &TargetDensity,
    i: usize,
    q: &QuadratureSpec,
) -> Result<f64, MatchError> {
    check_target(lift, target)?;
    let a = terminal_marginal_cf(lift, ctrl, components, i)?;
    cf_l1_distance(&a, &target.marginal_cf(i), q).map_err(|e| degenerate_as_divergent(e, i))
}

fn degenerate_as_divergent(e: CfError, component: usize) -> MatchError {
    match e {
        CfError::DegenerateDistribution { .. } => MatchError::NotIntegrable { component },
        other => other.into(),
    }
}

fn check_target(lift: &LiftedSystem, target: &TargetDensity) -> Result<(), MatchError> {
    let (n, _, _) = lift.dims();
    if target.dim() != n {
        return Err(MatchError::TargetDimension {
            target: target.dim(),
            state: n,
        });
    }
    Ok(())
}

/// Value and gradient in `(K, v)` of `D_i` for the combination built from
/// `sm`.
pub(crate) fn marginal_distance_gradient(
    lift: &LiftedSystem,
    sm: &AffineMap,
    components: &[ScalarDist],
    target: &TargetDensity,
    i: usize,
    q: &QuadratureSpec,
) -> Result<(f64, DMatrix<f64>, DVector<f64>), MatchError> {
    let a = terminal_from_map(lift, sm, components, i)?;
    let (value, dc, dg) = cf_l1_distance_gradient(&a, &target.marginal_cf(i), q)
        .map_err(|e| degenerate_as_divergent(e, i))?;
    // coefficients = r_i G + (ℬᵀr_i)ᵀ K G, offset = (ℬᵀr_i)ᵀ v
    let (n, _, _) = lift.dims();
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    let qv = (lift.state_row(&e, lift.horizon()) * lift.b()).transpose();
    let g = crate::constraints::gain_stack(lift);
    let gdc = g * DVector::from_column_slice(&dc);
    Ok((value, &qv * gdc.transpose(), qv * dg))
}

/// Largest `|ψ_a − ψ_b|` on [`SUP_GRID_POINTS`] points covering
/// `mean ± 8σ` of both densities; `ψ_a` is obtained by Fourier inversion.
pub fn sup_deviation(
    a: &LinComboCF<'_>,
    target: &ScalarDist,
    q: &QuadratureSpec,
) -> Result<f64, CfError> {
    let (lo, hi) = sup_window(a, target);
    let table = CfTable::with_window(a, q, (hi - a.mean()).max(a.mean() - lo))?;
    let step = (hi - lo) / (SUP_GRID_POINTS - 1) as f64;
    Ok((0..SUP_GRID_POINTS)
        .map(|k| {
            let z = lo + k as f64 * step;
            (table.pdf(z) - target.pdf(z)).abs()
        })
        .fold(0.0, f64::max))
}

/// Comparison window `[lo, hi]` for [`sup_deviation`].
pub fn sup_window(a: &LinComboCF<'_>, target: &ScalarDist) -> (f64, f64) {
    let spans = [(a.mean(), a.std_dev()), (target.mean(), target.std_dev())];
    let lo = spans
        .iter()
        .map(|(m, s)| m - SUP_GRID_SIGMAS * s)
        .fold(f64::INFINITY, f64::min);
    let hi = spans
        .iter()
        .map(|(m, s)| m + SUP_GRID_SIGMAS * s)
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `(1/2π)^{n−1} Σ D_i`.
pub fn joint_bound_check(distances: &[f64]) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    (2.0 * PI).powi(-(distances.len() as i32 - 1)) * distances.iter().sum::<f64>()
}

/// `Σ_i D_i` and `sup_i` deviations for every terminal dimension.
pub fn match_report(
    lift: &LiftedSystem,
    ctrl: &Controller,
    components: &[ScalarDist],
    target: &TargetDensity,
    q: &QuadratureSpec,
) -> Result<MatchReport, MatchError> {
    check_target(lift, target)?;
    let sm = state_map(lift, ctrl)?;
    let mut distances = Vec::with_capacity(target.dim());
    let mut sup_deviations = Vec::with_capacity(target.dim());
    for i in 0..target.dim() {
        let a = terminal_from_map(lift, &sm, components, i)?;
        distances.push(
            cf_l1_distance(&a, &target.marginal_cf(i), q)
                .map_err(|e| degenerate_as_divergent(e, i))?,
        );
        sup_deviations.push(sup_deviation(&a, &target.marginals()[i], q)?);
    }
    let joint_bound = joint_bound_check(&distances);
    Ok(MatchReport {
        distances,
        sup_deviations,
        joint_bound,
    })
}

/// Joint CF of `(y_1, y_2) = (c_1ᵀz + g_1, c_2ᵀz + g_2)` at `(t_1, t_2)`.
pub fn joint_cf(y1: &LinComboCF<'_>, y2: &LinComboCF<'_>, t1: f64, t2: f64) -> Complex64 {
    let mut acc = Complex64::from_polar(1.0, t1 * y1.offset() + t2 * y2.offset());
    for ((c1, c2), d) in y1
        .coefficients()
        .iter()
        .zip(y2.coefficients())
        .zip(y1.components())
    {
        let s = t1 * c1 + t2 * c2;
        if s != 0.0 {
            acc *= d.cf(s);
        }
    }
    acc
}

/// Direct tensor-grid evaluation of `(1/2π)² ∫∫ |φ_y(t) − φ_{b1}(t_1)φ_{b2}(t_2)| dt`
/// for a pair of combinations over the same components (possibly
/// dependent) against independent targets.
pub fn joint_distance_2d(
    y1: &LinComboCF<'_>,
    y2: &LinComboCF<'_>,
    b1: &ScalarDist,
    b2: &ScalarDist,
    q: &QuadratureSpec,
) -> Result<f64, CfError> {
    q.validate()?;
    if y1.components().len() != y2.components().len() {
        return Err(CfError::LengthMismatch {
            coefficients: y2.coefficients().len(),
            components: y1.components().len(),
        });
    }
    let t1b = LinComboCF::new(vec![1.0], std::slice::from_ref(b1), 0.0)?;
    let t2b = LinComboCF::new(vec![1.0], std::slice::from_ref(b2), 0.0)?;
    let g1 = distance_grid(y1, &t1b, q);
    let g2 = distance_grid(y2, &t2b, q);
    // Hermitian symmetry: integrate t_1 ≥ 0 over all t_2 and double.
    let mut sum = 0.0;
    for i in 0..g1.len() {
        let t1 = g1.node(i);
        let w1 = g1.weight(i);
        let cf_b1 = b1.cf(t1);
        let mut row = 0.0;
        for j in 0..g2.len() {
            let t2 = g2.node(j);
            let cell = |t2: f64| (joint_cf(y1, y2, t1, t2) - cf_b1 * b2.cf(t2)).norm();
            row += if j == 0 {
                2.0 * g2.weight(0) * cell(0.0)
            } else {
                g2.weight(j) * (cell(t2) + cell(-t2))
            };
        }
        sum += w1 * row;
    }
    Ok(2.0 * sum / (4.0 * PI * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cf::dist::normal_pdf;
    use crate::lift::{lift, LtvSystem};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn single(d: &ScalarDist) -> LinComboCF<'_> {
        LinComboCF::new(vec![1.0], std::slice::from_ref(d), 0.0).unwrap()
    }

    #[test]
    fn scalar_sum_terminal_cf() {
        let lf = lift(
            &LtvSystem::time_invariant(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], 1).unwrap(),
        );
        let comps = [
            ScalarDist::laplace(0.5, 0.3).unwrap(),
            ScalarDist::gaussian(-1.0, 2.0).unwrap(),
        ];
        let lc = terminal_marginal_cf(&lf, &Controller::zeros(&lf), &comps, 0).unwrap();
        for t in [0.3, -1.2, 2.5] {
            assert!((lc.eval(t) - comps[0].cf(t) * comps[1].cf(t)).norm() < 1e-15);
        }
        let det = [
            ScalarDist::gaussian(0.5, 0.0).unwrap(),
            ScalarDist::gaussian(1.0, 0.0).unwrap(),
        ];
        let lc = terminal_marginal_cf(&lf, &Controller::zeros(&lf), &det, 0).unwrap();
        assert!((lc.eval(2.0) - Complex64::from_polar(1.0, 3.0)).norm() < 1e-15);
        assert!(matches!(
            terminal_marginal_cf(&lf, &Controller::zeros(&lf), &det, 1),
            Err(MatchError::Component(1))
        ));
    }

    #[test]
    fn identical_and_symmetric() {
        let a = ScalarDist::laplace(0.2, 0.5).unwrap();
        let b = ScalarDist::mixture(vec![0.5, 0.5], vec![0.0, 1.0], vec![0.3, 0.3]).unwrap();
        assert!(cf_l1_distance(&single(&a), &single(&a), &q()).unwrap() < 1e-14);
        let ab = cf_l1_distance(&single(&a), &single(&b), &q()).unwrap();
        let ba = cf_l1_distance(&single(&b), &single(&a), &q()).unwrap();
        assert!((ab - ba).abs() < 1e-6 * ab);
    }

    #[test]
    fn distance_converges_under_refinement() {
        let a = ScalarDist::gaussian(0.0, 1.0).unwrap();
        let b = ScalarDist::gaussian(0.1, 1.0).unwrap();
        let coarse = cf_l1_distance(&single(&a), &single(&b), &q()).unwrap();
        let fine_q = QuadratureSpec {
            nodes_per_unit: 640,
            absolute_tolerance: 1e-14,
            ..q()
        };
        let fine = cf_l1_distance(&single(&a), &single(&b), &fine_q).unwrap();
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
        // oracle: |e^{0.1 i t} − 1| e^{−t²/2} integrated by Simpson
        let n = 200_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| 2.0 * (0.05 * t).sin().abs() * (-0.5 * t * t).exp();
        let simpson: f64 = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(k as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!(
            (fine - simpson / PI).abs() < 1e-9,
            "{fine} vs {}",
            simpson / PI
        );
    }

    #[test]
    fn sup_deviation_of_normals() {
        let a = ScalarDist::gaussian(0.0, 1.0).unwrap();
        let b = ScalarDist::gaussian(0.0, 1.1).unwrap();
        let dev = sup_deviation(&single(&a), &b, &q()).unwrap();
        let oracle = (0..=200_000)
            .map(|k| {
                let z = -9.0 + 18.0 * k as f64 / 200_000.0;
                (normal_pdf(z, 0.0, 1.0) - normal_pdf(z, 0.0, 1.1)).abs()
            })
            .fold(0.0, f64::max);
        assert!((dev - oracle).abs() < 1e-6, "{dev} vs {oracle}");
        assert!(sup_deviation(&single(&a), &a, &q()).unwrap() < 1e-9);
        let d = cf_l1_distance(&single(&a), &single(&b), &q()).unwrap();
        // equal means: φa − φb is real and positive, so the bound is attained at 0
        assert!(dev <= d + 1e-12, "{dev} vs {d}");
    }

    #[test]
    fn pointwise_pdf_bound() {
        let cat = [
            ScalarDist::gaussian(0.3, 0.5).unwrap(),
            ScalarDist::laplace(0.0, 0.6).unwrap(),
            ScalarDist::mixture(vec![0.3, 0.7], vec![-1.0, 0.5], vec![0.2, 0.4]).unwrap(),
        ];
        for a in &cat {
            for b in &cat {
                let d = cf_l1_distance(&single(a), &single(b), &q()).unwrap();
                let ta = CfTable::with_window(&single(a), &q(), 6.0).unwrap();
                let tb = CfTable::with_window(&single(b), &q(), 6.0).unwrap();
                for k in 0..=120 {
                    let z = -3.0 + 0.05 * k as f64;
                    assert!((ta.pdf(z) - tb.pdf(z)).abs() <= d + 1e-9);
                }
            }
        }
    }

    #[test]
    fn joint_bound_trivia() {
        assert_eq!(joint_bound_check(&[0.7]), 0.7);
        assert_eq!(joint_bound_check(&[0.0, 0.0]), 0.0);
        assert!((joint_bound_check(&[1.0, 2.0]) - 3.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn joint_distance_of_independent_pairs() {
        // independent y_i against their own distributions: distance 0
        let comps = [
            ScalarDist::gaussian(0.0, 4.0).unwrap(),
            ScalarDist::laplace(1.0, 2.0).unwrap(),
        ];
        let y1 = LinComboCF::new(vec![1.0, 0.0], &comps, 0.0).unwrap();
        let y2 = LinComboCF::new(vec![0.0, 1.0], &comps, 0.0).unwrap();
        let coarse = QuadratureSpec {
            nodes_per_unit: 16,
            absolute_tolerance: 1e-5,
            ..q()
        };
        let d = joint_distance_2d(&y1, &y2, &comps[0], &comps[1], &coarse).unwrap();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let comps = [
            ScalarDist::gaussian(0.5, 0.4).unwrap(),
            ScalarDist::laplace(-1.0, 0.3).unwrap(),
            ScalarDist::mixture(vec![0.5, 0.5], vec![0.0, 0.5], vec![0.2, 0.3]).unwrap(),
        ];
        let target = ScalarDist::gaussian(1.0, 0.5).unwrap();
        let c = [0.9, 1.1, -0.7];
        let g = 0.3;
        let a = LinComboCF::new(c.to_vec(), &comps, g).unwrap();
        let (value, dc, dg) = cf_l1_distance_gradient(&a, &single(&target), &q()).unwrap();
        assert!((value - cf_l1_distance(&a, &single(&target), &q()).unwrap()).abs() < 1e-14);
        // a fixed-grid oracle: the same rule with the base grid held fixed
        let grid = distance_grid(&a, &single(&target), &q());
        let f = |c: &[f64], g: f64| {
            let lc = LinComboCF::new(c.to_vec(), &comps, g).unwrap();
            (0..grid.len())
                .map(|k| {
                    let t = grid.node(k);
                    grid.weight(k) * (lc.eval(t) - target.cf(t)).norm()
                })
                .sum::<f64>()
                / PI
                + grid.step * grid.step / (12.0 * PI) * (lc.mean() - target.mean()).abs()
        };
        let h = 1e-6;
        for j in 0..3 {
            let mut cp = c;
            let mut cm = c;
            cp[j] += h;
            cm[j] -= h;
            let fd = (f(&cp, g) - f(&cm, g)) / (2.0 * h);
            assert!((fd - dc[j]).abs() < 1e-6, "c{j}: {fd} vs {}", dc[j]);
        }
        let fd = (f(&c, g + h) - f(&c, g - h)) / (2.0 * h);
        assert!((fd - dg).abs() < 1e-6);
    }

    #[test]
    fn gain_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = LtvSystem::time_invariant(
            dmatrix![1.0, 0.5; 0.0, 1.0],
            dmatrix![0.1; 0.5],
            dmatrix![0.3, 0.0; 0.0, 0.2],
            3,
        )
        .unwrap();
        let lf = lift(&sys);
        let comps: Vec<ScalarDist> = (0..lf.random_len())
            .map(|i| {
                if i % 2 == 0 {
                    ScalarDist::gaussian(0.1, 0.3).unwrap()
                } else {
                    ScalarDist::laplace(0.0, 0.4).unwrap()
                }
            })
            .collect();
        let target = TargetDensity::new(vec![
            ScalarDist::gaussian(1.0, 0.2).unwrap(),
            ScalarDist::gaussian(0.0, 0.1).unwrap(),
        ])
        .unwrap();
        let params: Vec<f64> = (0..lf.controller_parameters())
            .map(|_| rng.random_range(-0.3..0.3))
            .collect();
        let ctrl = Controller::from_params(&lf, &params).unwrap();
        let sm = state_map(&lf, &ctrl).unwrap();
        for i in 0..2 {
            let (_, dk, dv) =
                marginal_distance_gradient(&lf, &sm, &comps, &target, i, &q()).unwrap();
            let flat = Controller::flatten_gradient(&lf, &dk, &dv);
            let h = 1e-6;
            for j in [0, 3, 7, params.len() - 1] {
                let mut p = params.clone();
                p[j] += h;
                let up = marginal_distance(
                    &lf,
                    &Controller::from_params(&lf, &p).unwrap(),
                    &comps,
                    &target,
                    i,
                    &q(),
                )
                .unwrap();
                p[j] -= 2.0 * h;
                let dn = marginal_distance(
                    &lf,
                    &Controller::from_params(&lf, &p).unwrap(),
                    &comps,
                    &target,
                    i,
                    &q(),
                )
                .unwrap();
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - flat[j]).abs() < 1e-5,
                    "dim {i} param {j}: {fd} vs {}",
                    flat[j]
                );
            }
        }
    }
}
