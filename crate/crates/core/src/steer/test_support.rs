use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ProblemSpec, SolverOptions, SteeringProblem};
use crate::cf::{QuadratureSpec, ScalarDist};
use crate::constraints::Polytope;
use crate::lift::LtvSystem;
use crate::matching::TargetDensity;

/// Random `n = 2, m = 1, p = 1, N = 3` instance with loose box constraints.
/// `deterministic` zeroes every variance.
pub(crate) fn small_problem(seed: u64, deterministic: bool) -> SteeringProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, r(-0.3, 0.3), r(0.6, 1.0)]);
    let b = DMatrix::from_row_slice(2, 1, &[r(0.0, 0.3), 1.0]);
    let d = DMatrix::from_row_slice(2, 1, &[r(0.1, 0.4), r(0.1, 0.4)]);
    let horizon = 3;
    let system = LtvSystem::time_invariant(a, b, d, horizon).unwrap();
    let var = |v: f64| if deterministic { 0.0 } else { v };
    let initial = vec![
        ScalarDist::gaussian(r(-0.5, 0.5), var(r(0.05, 0.3))).unwrap(),
        ScalarDist::gaussian(r(-0.5, 0.5), var(r(0.05, 0.3))).unwrap(),
    ];
    let disturbance = (0..horizon)
        .map(|k| {
            if !deterministic && seed % 2 == 1 && k == 1 {
                ScalarDist::laplace(0.0, 0.3).unwrap()
            } else {
                ScalarDist::gaussian(0.0, var(r(0.05, 0.2))).unwrap()
            }
        })
        .collect();
    let reference = DVector::from_fn(2 * (horizon + 1), |i, _| {
        if i % 2 == 0 {
            0.5 * (i / 2) as f64
        } else {
            0.5
        }
    });
    let spec = ProblemSpec {
        system,
        initial,
        disturbance,
        state_polytope: Polytope::boxed(&[-6.0, -6.0], &[6.0, 6.0]).unwrap(),
        input_polytope: Polytope::boxed(&[-3.0], &[3.0]).unwrap(),
        state_risk: 0.1,
        input_risk: 0.1,
        state_weights: vec![DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])); horizon],
        input_weights: vec![DMatrix::identity(1, 1); horizon],
        reference,
        target: TargetDensity::new(vec![
            ScalarDist::gaussian(1.5, 0.3).unwrap(),
            ScalarDist::gaussian(0.5, 0.4).unwrap(),
        ])
        .unwrap(),
        lambda: vec![2.0, 1.0],
        quadrature: QuadratureSpec::default(),
        options: SolverOptions::default(),
    };
    SteeringProblem::new(spec).unwrap()
}
