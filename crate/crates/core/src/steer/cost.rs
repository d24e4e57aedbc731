use nalgebra::{DMatrix, DVector};

use super::SteeringProblem;
use crate::lift::Controller;

struct Terms {
    closed: DMatrix<f64>,
    state_err: DVector<f64>,
    input_mean: DVector<f64>,
}

fn terms(p: &SteeringProblem, ctrl: &Controller) -> Terms {
    let lf = p.lifted();
    let k = ctrl.gain();
    let closed = DMatrix::identity(lf.state_len(), lf.state_len()) + lf.b() * k;
    let m = p.open_loop_mean();
    let state_err = &closed * m + lf.b() * ctrl.feedforward() - &p.spec().reference;
    let input_mean = k * m + ctrl.feedforward();
    Terms {
        closed,
        state_err,
        input_mean,
    }
}

/// Exact expected quadratic cost of the closed loop:
/// `ēᵀ𝒬ē + ūᵀℛū + tr[((I+ℬK)ᵀ𝒬(I+ℬK) + KᵀℛK)Σ]`.
pub fn cost_exact(p: &SteeringProblem, ctrl: &Controller) -> f64 {
    let t = terms(p, ctrl);
    let (q, r, s) = (p.q_cal(), p.r_cal(), p.open_loop_covariance());
    let k = ctrl.gain();
    let mean_part = t.state_err.dot(&(q * &t.state_err)) + t.input_mean.dot(&(r * &t.input_mean));
    let spread = t.closed.transpose() * q * &t.closed + k.transpose() * r * k;
    mean_part + (spread * s).trace()
}

/// [`cost_exact`] with its gradient in `K` (non-causal entries zeroed) and `v`.
pub fn cost_gradient(p: &SteeringProblem, ctrl: &Controller) -> (f64, DMatrix<f64>, DVector<f64>) {
    let t = terms(p, ctrl);
    let lf = p.lifted();
    let (q, r, s) = (p.q_cal(), p.r_cal(), p.open_loop_covariance());
    let k = ctrl.gain();
    let b = lf.b();
    let qe = q * &t.state_err;
    let ru = r * &t.input_mean;
    let value = t.state_err.dot(&qe)
        + t.input_mean.dot(&ru)
        + ((t.closed.transpose() * q * &t.closed + k.transpose() * r * k) * s).trace();
    let dv = (b.transpose() * &qe + &ru) * 2.0;
    let m = p.open_loop_mean();
    // 2(ℬᵀ𝒬ē + ℛū)m̄ᵀ + 2ℬᵀ𝒬(I+ℬK)Σ + 2ℛKΣ
    let mut dk = &dv * m.transpose() + (b.transpose() * q * &t.closed * s + r * k * s) * 2.0;
    lf.mask_gain(&mut dk);
    (value, dk, dv)
}

/// Feedforward minimizing the cost of the mean system with `K = 0`:
/// `(ℬᵀ𝒬ℬ + ℛ)v = ℬᵀ𝒬(X_d − m̄)`.
pub fn mean_lq_feedforward(p: &SteeringProblem) -> DVector<f64> {
    let b = p.lifted().b();
    let q = p.q_cal();
    let h = b.transpose() * q * b + p.r_cal();
    let rhs = b.transpose() * q * (&p.spec().reference - p.open_loop_mean());
    h.cholesky().expect("ℛ is positive definite").solve(&rhs)
}

/// Warm start for the solver: [`mean_lq_feedforward`] with an extra
/// terminal pull `Σ λ_i (x̄_N,i − μ_f,i)²` toward the target means.
pub fn warm_start_feedforward(p: &SteeringProblem) -> DVector<f64> {
    let lf = p.lifted();
    let (n, _, _) = lf.dims();
    let b = lf.b();
    let q = p.q_cal();
    let bn = b.rows(lf.horizon() * n, n);
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(p.lambda()));
    let target = DVector::from_iterator(n, p.target().marginals().iter().map(|d| d.mean()));
    let m = p.open_loop_mean();
    let h = b.transpose() * q * b + p.r_cal() + bn.transpose() * &lambda * bn;
    let rhs = b.transpose() * q * (&p.spec().reference - m)
        + bn.transpose() * &lambda * (target - m.rows(lf.horizon() * n, n));
    h.cholesky().expect("ℛ is positive definite").solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steer::test_support::small_problem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_for_exact_deterministic_tracking() {
        // zero-variance components and a reference generated by the mean dynamics with U = 0
        let p = small_problem(0, true);
        let lf = p.lifted();
        let ctrl = Controller::zeros(lf);
        let spec = p.spec().clone();
        let mut spec = spec;
        spec.reference = p.open_loop_mean().clone();
        let p = SteeringProblem::new(spec).unwrap();
        assert!(cost_exact(&p, &ctrl).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = small_problem(3, false);
        let lf = p.lifted();
        for _ in 0..5 {
            let params: Vec<f64> = (0..lf.controller_parameters())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let ctrl = Controller::from_params(lf, &params).unwrap();
            let (value, dk, dv) = cost_gradient(&p, &ctrl);
            assert!((value - cost_exact(&p, &ctrl)).abs() < 1e-10 * value.abs().max(1.0));
            let flat = Controller::flatten_gradient(lf, &dk, &dv);
            for j in 0..params.len() {
                let h = 1e-4;
                let mut pp = params.clone();
                pp[j] += h;
                let up = cost_exact(&p, &Controller::from_params(lf, &pp).unwrap());
                pp[j] -= 2.0 * h;
                let dn = cost_exact(&p, &Controller::from_params(lf, &pp).unwrap());
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (fd - flat[j]).abs() <= 1e-6 * flat[j].abs().max(1.0),
                    "param {j}: {fd} vs {}",
                    flat[j]
                );
            }
        }
    }

    #[test]
    fn mean_lq_solves_normal_equations() {
        let p = small_problem(5, false);
        let v = mean_lq_feedforward(&p);
        let lf = p.lifted();
        let mut params = vec![0.0; lf.gain_parameters()];
        params.extend(v.iter());
        let ctrl = Controller::from_params(lf, &params).unwrap();
        let (_, _, dv) = cost_gradient(&p, &ctrl);
        assert!(dv.amax() < 1e-9);
    }
}
