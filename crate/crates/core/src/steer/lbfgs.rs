//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Merit value after every accepted step, starting with `x₀`.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-loop recursion: `-H g` for the stored pairs.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}

/// Minimizes `f` from `x0`. `f` may fail at trial points, which are then
/// treated as infinitely bad; a failure at `x0` is returned.
pub(crate) fn minimize<E, F>(
    mut f: F,
    x0: Vec<f64>,
    memory: usize,
    max_iterations: usize,
    gradient_tolerance: f64,
) -> Result<Outcome, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let (mut value, mut gradient) = f(&x0)?;
    let mut x = x0;
    let mut evaluations = 1;
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < max_iterations && inf_norm(&gradient) > gradient_tolerance {
        let mut d = direction(&gradient, &pairs);
        let mut slope = dot(&d, &gradient);
        if !(slope < 0.0) {
            pairs.clear();
            d = gradient.iter().map(|g| -g).collect();
            slope = -dot(&gradient, &gradient);
        }
        let mut step = if pairs.is_empty() {
            (1.0 / inf_norm(&gradient)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            evaluations += 1;
            if let Ok((v, g)) = f(&trial) {
                if v.is_finite() && v <= value + ARMIJO * step * slope {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            step *= BACKTRACK;
        }
        let Some((xn, vn, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let decrease = value - vn;
        x = xn;
        value = vn;
        gradient = gn;
        trace.push(value);
        iterations += 1;
        if decrease <= 1e-15 * value.abs().max(1.0) {
            break;
        }
    }
    Ok(Outcome {
        x,
        iterations,
        evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((
                v,
                vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ],
            ))
        };
        let out = minimize(f, vec![-1.2, 1.0], 10, 1000, 1e-10).unwrap();
        assert!(
            (out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            out.x
        );
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn solves_quadratic_exactly() {
        // f = ½xᵀAx − bᵀx with A = diag(1..6)
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            let g: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, xi)| (i + 1) as f64 * xi - 1.0)
                .collect();
            let v = x
                .iter()
                .enumerate()
                .map(|(i, xi)| 0.5 * (i + 1) as f64 * xi * xi - xi)
                .sum();
            Ok((v, g))
        };
        let out = minimize(f, vec![0.0; 6], 10, 200, 1e-12).unwrap();
        for (i, xi) in out.x.iter().enumerate() {
            assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-7);
        }
    }

    #[test]
    fn failing_trial_points_are_rejected() {
        // undefined for x < 0.5; the minimizer at 1 must still be found
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>), ()> {
            if x[0] < 0.5 {
                return Err(());
            }
            Ok(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]))
        };
        let out = minimize(f, vec![3.0], 5, 100, 1e-10).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8);
    }
}
