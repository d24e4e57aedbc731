//! Monte-Carlo validation of a steering controller.
//!
//! Sample `i` draws its components from `ChaCha8Rng::seed_from_u64(seed)`
//! moved to stream `i`, in the lifted order `[x₀; W]`. Samples are
//! independent of scheduling, so the parallel run is reproducible bit for
//! bit.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cf::ScalarDist;
use crate::constraints::ConstraintKind;
use crate::lift::{input_map, state_map, Controller, LiftError};
use crate::matching::TargetDensity;
use crate::steer::SteeringProblem;

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("sample count {0} is below {MIN_SAMPLES}")]
    TooFewSamples(usize),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error(transparent)]
    Lift(#[from] LiftError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Bins per terminal-marginal histogram.
    pub bins: usize,
    /// Leading samples whose full trajectories are kept.
    pub kept_paths: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            bins: 60,
            kept_paths: 0,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.samples < MIN_SAMPLES {
            return Err(McError::TooFewSamples(self.samples));
        }
        if self.bins == 0 {
            return Err(McError::NoBins);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn from_sorted(sorted: &[f64], bins: usize) -> Self {
        let (lower, upper) = (sorted[0], sorted[sorted.len() - 1]);
        let width = (upper - lower).max(f64::MIN_POSITIVE);
        let mut counts = vec![0; bins];
        for x in sorted {
            let b = (((x - lower) / width) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Self {
            lower,
            upper,
            counts,
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.counts.len() as f64
    }

    /// Normalized density per bin, as `(center, density)`.
    pub fn density(&self) -> Vec<(f64, f64)> {
        let total: u64 = self.counts.iter().sum();
        let w = self.bin_width();
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d = if w > 0.0 {
                    *c as f64 / (total as f64 * w)
                } else {
                    0.0
                };
                (self.lower + (i as f64 + 0.5) * w, d)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub samples: usize,
    pub seed: u64,
    pub cost_mean: f64,
    pub cost_std_error: f64,
    /// Violation rate per Boole constraint, in problem order.
    pub constraint_rates: Vec<f64>,
    /// Fraction of samples leaving the state polytope at some `k = 1..=N`.
    pub state_joint_rate: f64,
    /// Fraction of samples leaving the input polytope at some `k = 0..N-1`.
    pub input_joint_rate: f64,
    /// Per-stage joint violation rates averaged over the stages.
    pub state_stage_average: f64,
    pub input_stage_average: f64,
    /// Sorted samples of each terminal coordinate.
    pub terminal: Vec<Vec<f64>>,
    pub histograms: Vec<Histogram>,
    /// Sample means and standard deviations of `X`, per lifted coordinate.
    pub state_mean: DVector<f64>,
    pub state_std: DVector<f64>,
    pub input_mean: DVector<f64>,
    pub input_std: DVector<f64>,
    /// `(X, U)` of the first `kept_paths` samples.
    pub paths: Vec<(DVector<f64>, DVector<f64>)>,
}

struct SampleOutcome {
    cost: f64,
    violated: Vec<bool>,
    x: DVector<f64>,
    u: DVector<f64>,
}

fn draw(
    components: &[ScalarDist],
    n: usize,
    seed: u64,
    index: u64,
) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let z: Vec<f64> = components.iter().map(|c| c.sample(&mut rng)).collect();
    (
        DVector::from_column_slice(&z[..n]),
        DVector::from_column_slice(&z[n..]),
    )
}

fn mean_and_std(rows: &[&DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let m = rows.len() as f64;
    let len = rows[0].len();
    let mut mean = DVector::zeros(len);
    for r in rows {
        mean += *r;
    }
    mean /= m;
    let mut var = DVector::zeros(len);
    for r in rows {
        let d = *r - &mean;
        var += d.component_mul(&d);
    }
    (mean, (var / (m - 1.0)).map(f64::sqrt))
}

/// Closed-loop simulation of `ctrl` on `problem`.
pub fn simulate(
    problem: &SteeringProblem,
    ctrl: &Controller,
    cfg: &McConfig,
) -> Result<McReport, McError> {
    cfg.validate()?;
    let lf = problem.lifted();
    let (n, m, _) = lf.dims();
    let horizon = lf.horizon();
    let xm = state_map(lf, ctrl)?;
    let um = input_map(lf, ctrl)?;
    let q = problem.q_cal();
    let r = problem.r_cal();
    let reference = &problem.spec().reference;
    let constraints = problem.constraints();

    let outcomes: Vec<SampleOutcome> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let (x0, w) = draw(problem.components(), n, cfg.seed, i);
            let x = xm.apply(&x0, &w);
            let u = um.apply(&x0, &w);
            let e = &x - reference;
            let cost = e.dot(&(q * &e)) + u.dot(&(r * &u));
            let violated = constraints
                .iter()
                .map(|c| {
                    let (vec, dim) = match c.kind() {
                        ConstraintKind::State => (&x, n),
                        ConstraintKind::Input => (&u, m),
                    };
                    let value: f64 = c
                        .normal()
                        .iter()
                        .enumerate()
                        .map(|(j, a)| a * vec[c.stage() * dim + j])
                        .sum();
                    value > c.bound()
                })
                .collect();
            SampleOutcome {
                cost,
                violated,
                x,
                u,
            }
        })
        .collect();

    let count = cfg.samples as f64;
    let cost_mean = outcomes.iter().map(|o| o.cost).sum::<f64>() / count;
    let cost_var = outcomes
        .iter()
        .map(|o| (o.cost - cost_mean).powi(2))
        .sum::<f64>()
        / (count - 1.0);
    let mut constraint_rates = vec![0.0; constraints.len()];
    let mut state_joint = 0usize;
    let mut input_joint = 0usize;
    let mut state_stage = vec![0usize; horizon + 1];
    let mut input_stage = vec![0usize; horizon];
    for o in &outcomes {
        let mut stage_x = vec![false; horizon + 1];
        let mut stage_u = vec![false; horizon];
        for (j, (c, &v)) in constraints.iter().zip(&o.violated).enumerate() {
            if v {
                constraint_rates[j] += 1.0;
                match c.kind() {
                    ConstraintKind::State => stage_x[c.stage()] = true,
                    ConstraintKind::Input => stage_u[c.stage()] = true,
                }
            }
        }
        state_joint += stage_x.iter().any(|b| *b) as usize;
        input_joint += stage_u.iter().any(|b| *b) as usize;
        stage_x
            .iter()
            .zip(state_stage.iter_mut())
            .for_each(|(b, s)| *s += *b as usize);
        stage_u
            .iter()
            .zip(input_stage.iter_mut())
            .for_each(|(b, s)| *s += *b as usize);
    }
    constraint_rates.iter_mut().for_each(|x| *x /= count);
    let stage_average = |counts: &[usize]| {
        if counts.is_empty() {
            0.0
        } else {
            counts.iter().sum::<usize>() as f64 / (count * counts.len() as f64)
        }
    };

    let terminal: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = outcomes.iter().map(|o| o.x[horizon * n + i]).collect();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let histograms = terminal
        .iter()
        .map(|s| Histogram::from_sorted(s, cfg.bins))
        .collect();
    let xs: Vec<&DVector<f64>> = outcomes.iter().map(|o| &o.x).collect();
    let us: Vec<&DVector<f64>> = outcomes.iter().map(|o| &o.u).collect();
    let (state_mean, state_std) = mean_and_std(&xs);
    let (input_mean, input_std) = mean_and_std(&us);
    let paths = outcomes
        .iter()
        .take(cfg.kept_paths)
        .map(|o| (o.x.clone(), o.u.clone()))
        .collect();

    Ok(McReport {
        samples: cfg.samples,
        seed: cfg.seed,
        cost_mean,
        cost_std_error: (cost_var / count).sqrt(),
        constraint_rates,
        state_joint_rate: state_joint as f64 / count,
        input_joint_rate: input_joint as f64 / count,
        // the state stage k = 0 is never constrained
        state_stage_average: stage_average(&state_stage[1..]),
        input_stage_average: stage_average(&input_stage),
        terminal,
        histograms,
        state_mean,
        state_std,
        input_mean,
        input_std,
        paths,
    })
}

/// Kolmogorov–Smirnov distance between sorted samples and a cdf.
pub fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let m = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / m).abs())
            .max(((i + 1) as f64 / m - f).abs())
    })
}

/// KS distance of each simulated terminal marginal to the target marginal.
pub fn terminal_ks(report: &McReport, target: &TargetDensity) -> Vec<f64> {
    report
        .terminal
        .iter()
        .zip(target.marginals())
        .map(|(s, t)| ks_distance(s, |x| t.cdf(x)))
        .collect()
}

/// Default per-dimension KS tolerance: the 95% same-distribution bound
/// `1.36/√M` widened by the achieved CF distance `D_i`.
pub fn ks_tolerances(samples: usize, distances: &[f64]) -> Vec<f64> {
    distances
        .iter()
        .map(|d| 1.36 / (samples as f64).sqrt() + d.min(1.0))
        .collect()
}

/// Pass/fail per terminal dimension: KS distance below its tolerance.
pub fn empirical_terminal_check(
    report: &McReport,
    target: &TargetDensity,
    tolerances: &[f64],
) -> Vec<bool> {
    terminal_ks(report, target)
        .iter()
        .zip(tolerances)
        .map(|(ks, tol)| ks < tol)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steer::test_support::small_problem;
    use crate::steer::{cost_exact, Evaluator, RiskMode};

    fn controller(p: &SteeringProblem) -> Controller {
        let ev = Evaluator::new(p, RiskMode::Uniform).unwrap();
        ev.controller(&ev.initial_point()).unwrap()
    }

    #[test]
    fn identical_seeds_reproduce() {
        let p = small_problem(30, false);
        let c = controller(&p);
        let cfg = McConfig {
            samples: 2000,
            seed: 9,
            bins: 20,
            kept_paths: 0,
        };
        assert_eq!(
            simulate(&p, &c, &cfg).unwrap(),
            simulate(&p, &c, &cfg).unwrap()
        );
        let other = simulate(&p, &c, &McConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(other.cost_mean, simulate(&p, &c, &cfg).unwrap().cost_mean);
    }

    #[test]
    fn zero_variance_is_exact() {
        let p = small_problem(0, true);
        let c = controller(&p);
        let r = simulate(
            &p,
            &c,
            &McConfig {
                samples: 200,
                seed: 1,
                bins: 5,
                kept_paths: 0,
            },
        )
        .unwrap();
        assert!((r.cost_mean - cost_exact(&p, &c)).abs() < 1e-9 * r.cost_mean.max(1.0));
        assert!(r.cost_std_error < 1e-9);
        assert!(r.constraint_rates.iter().all(|x| *x == 0.0 || *x == 1.0));
    }

    #[test]
    fn joint_rate_bounded_by_sum() {
        // tight box so that violations actually occur
        let base = small_problem(32, false);
        let mut spec = base.spec().clone();
        spec.state_polytope =
            crate::constraints::Polytope::boxed(&[-1.0, -1.5], &[3.0, 1.5]).unwrap();
        spec.initial = vec![
            ScalarDist::gaussian(0.0, 0.2).unwrap(),
            ScalarDist::gaussian(0.0, 0.2).unwrap(),
        ];
        let p = SteeringProblem::new(spec).unwrap();
        let c = controller(&p);
        let r = simulate(
            &p,
            &c,
            &McConfig {
                samples: 5000,
                seed: 2,
                bins: 10,
                kept_paths: 0,
            },
        )
        .unwrap();
        let nx = p.state_constraint_count();
        let sum: f64 = r.constraint_rates[..nx].iter().sum();
        assert!(r.state_joint_rate > 0.0);
        assert!(r.state_joint_rate <= sum + 1e-15);
        assert!(r.input_joint_rate <= r.constraint_rates[nx..].iter().sum::<f64>() + 1e-15);
    }

    #[test]
    fn per_constraint_rate_matches_gil_pelaez() {
        let base = small_problem(34, false);
        let mut spec = base.spec().clone();
        spec.state_polytope =
            crate::constraints::Polytope::boxed(&[-1.0, -1.5], &[2.0, 1.5]).unwrap();
        spec.initial = vec![
            ScalarDist::gaussian(0.0, 0.2).unwrap(),
            ScalarDist::gaussian(0.0, 0.2).unwrap(),
        ];
        let p = SteeringProblem::new(spec).unwrap();
        let c = controller(&p);
        let r = simulate(
            &p,
            &c,
            &McConfig {
                samples: 20_000,
                seed: 3,
                bins: 10,
                kept_paths: 0,
            },
        )
        .unwrap();
        let g = p.gain_stack();
        for (j, pc) in p.prepared().iter().enumerate() {
            // margin at δ = 0 is P(row ≤ bound) − 1
            let predicted = -pc
                .margin(g, &c, p.components(), 0.0, p.quadrature())
                .unwrap();
            let se = (predicted * (1.0 - predicted) / r.samples as f64)
                .sqrt()
                .max(1e-4);
            assert!(
                (r.constraint_rates[j] - predicted).abs() <= 3.0 * se + 1e-6,
                "{j}: {} vs {predicted}",
                r.constraint_rates[j]
            );
        }
    }

    #[test]
    fn doubling_samples_shrinks_standard_error_by_sqrt2() {
        let p = small_problem(36, false);
        let c = controller(&p);
        let mut ratios = Vec::new();
        for seed in 0..8 {
            let a = simulate(
                &p,
                &c,
                &McConfig {
                    samples: 2000,
                    seed,
                    bins: 10,
                    kept_paths: 0,
                },
            )
            .unwrap();
            let b = simulate(
                &p,
                &c,
                &McConfig {
                    samples: 4000,
                    seed: seed + 100,
                    bins: 10,
                    kept_paths: 0,
                },
            )
            .unwrap();
            ratios.push(a.cost_std_error / b.cost_std_error);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((1.3..=1.5).contains(&mean), "{ratios:?}");
    }

    #[test]
    fn ks_detects_shifted_target() {
        let p = small_problem(38, false);
        let c = controller(&p);
        let r = simulate(
            &p,
            &c,
            &McConfig {
                samples: 4000,
                seed: 4,
                bins: 10,
                kept_paths: 0,
            },
        )
        .unwrap();
        let lf = p.lifted();
        let same: Vec<ScalarDist> = (0..2)
            .map(|i| {
                let lc = crate::matching::terminal_marginal_cf(lf, &c, p.components(), i).unwrap();
                ScalarDist::gaussian(lc.mean(), lc.std_dev().powi(2)).unwrap()
            })
            .collect();
        let shifted: Vec<ScalarDist> = same
            .iter()
            .map(|d| ScalarDist::gaussian(d.mean() + 5.0 * d.std_dev(), d.variance()).unwrap())
            .collect();
        let tol = vec![1.36 / (4000f64).sqrt(); 2];
        let target = TargetDensity::new(same).unwrap();
        assert!(empirical_terminal_check(&r, &target, &tol)
            .iter()
            .all(|b| *b));
        let target = TargetDensity::new(shifted).unwrap();
        assert!(empirical_terminal_check(&r, &target, &tol)
            .iter()
            .all(|b| !*b));
    }

    #[test]
    fn rejects_tiny_sample_counts() {
        let p = small_problem(40, false);
        let c = controller(&p);
        assert_eq!(
            simulate(
                &p,
                &c,
                &McConfig {
                    samples: 50,
                    ..McConfig::default()
                }
            ),
            Err(McError::TooFewSamples(50))
        );
    }
}
