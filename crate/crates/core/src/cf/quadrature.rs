use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use super::CfError;

/// Distance from the mean, in standard deviations, beyond which a cdf is
/// treated as exactly 0 or 1 and a pdf as 0.
pub const FAR_TAIL_SIGMAS: f64 = 40.0;

static CAPPED_GRIDS: AtomicU64 = AtomicU64::new(0);

/// Number of quadrature grids whose node count hit `max_nodes`.
pub fn capped_grid_count() -> u64 {
    CAPPED_GRIDS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Integrate over `(0, T]` with a step of `1 / nodes_per_unit`.
    FixedUpper(f64),
    /// Choose `T` from the envelope of the characteristic function: at
    /// least `multiplier / σ`, extended until the envelope drops below the
    /// absolute tolerance. The step is `1 / (nodes_per_unit σ)`.
    AutoSixSigma { multiplier: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub truncation: Truncation,
    pub nodes_per_unit: usize,
    pub absolute_tolerance: f64,
    pub max_nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            truncation: Truncation::AutoSixSigma { multiplier: 8.0 },
            nodes_per_unit: 64,
            absolute_tolerance: 1e-8,
            max_nodes: 1 << 20,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), CfError> {
        match self.truncation {
            Truncation::FixedUpper(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(CfError::InvalidParameter(format!(
                    "upper limit must be positive (got {t})"
                )));
            }
            Truncation::AutoSixSigma { multiplier }
                if !(multiplier > 0.0 && multiplier.is_finite()) =>
            {
                return Err(CfError::InvalidParameter(format!(
                    "truncation multiplier must be positive (got {multiplier})"
                )));
            }
            _ => {}
        }
        if self.nodes_per_unit < 8 {
            return Err(CfError::InvalidParameter(format!(
                "nodes_per_unit must be at least 8 (got {})",
                self.nodes_per_unit
            )));
        }
        if !(self.absolute_tolerance > 0.0 && self.absolute_tolerance < 1.0) {
            return Err(CfError::InvalidParameter(format!(
                "absolute_tolerance must lie in (0, 1) (got {})",
                self.absolute_tolerance
            )));
        }
        if self.max_nodes < 16 {
            return Err(CfError::InvalidParameter(
                "max_nodes must be at least 16".into(),
            ));
        }
        Ok(())
    }

    fn multiplier(&self) -> f64 {
        match self.truncation {
            Truncation::AutoSixSigma { multiplier } => multiplier,
            Truncation::FixedUpper(_) => 8.0,
        }
    }

    /// Grid for inverting a single characteristic function with standard
    /// deviation `sigma`. The step keeps the aliasing period wider than the
    /// non-negligible support `±(FAR_TAIL_SIGMAS + multiplier) σ`.
    pub(crate) fn inversion_grid(&self, sigma: f64, envelope: impl Fn(f64) -> f64) -> Grid {
        match self.truncation {
            Truncation::FixedUpper(upper) => self.fixed(upper),
            Truncation::AutoSixSigma { multiplier } => {
                let step = (1.0 / (self.nodes_per_unit as f64 * sigma))
                    .min(PI / ((FAR_TAIL_SIGMAS + multiplier) * sigma));
                let upper = self.envelope_upper(multiplier / sigma, envelope);
                self.build(step, upper)
            }
        }
    }

    /// Grid for the L1 distance between two characteristic functions.
    /// `fine_scale` is the largest spatial scale involved (it sets the step)
    /// and `coarse_scale` the smallest (it sets the truncation).
    pub(crate) fn distance_grid(
        &self,
        fine_scale: f64,
        coarse_scale: f64,
        envelope: impl Fn(f64) -> f64,
    ) -> Grid {
        match self.truncation {
            Truncation::FixedUpper(upper) => self.fixed(upper),
            Truncation::AutoSixSigma { multiplier } => {
                let step = 1.0 / (self.nodes_per_unit as f64 * fine_scale);
                let upper = self.envelope_upper(multiplier / coarse_scale, envelope);
                self.build(step, upper)
            }
        }
    }

    /// Grid for pdf inversion over `mean ± half_width`.
    pub(crate) fn window_grid(
        &self,
        sigma: f64,
        half_width: f64,
        envelope: impl Fn(f64) -> f64,
    ) -> Grid {
        match self.truncation {
            Truncation::FixedUpper(upper) => self.fixed(upper),
            Truncation::AutoSixSigma { multiplier } => {
                let span = half_width.max((FAR_TAIL_SIGMAS + multiplier) * sigma);
                let step = (1.0 / (self.nodes_per_unit as f64 * sigma))
                    .min(PI / (span + multiplier * sigma));
                let upper = self.envelope_upper(multiplier / sigma, envelope);
                self.build(step, upper)
            }
        }
    }

    fn fixed(&self, upper: f64) -> Grid {
        self.build(1.0 / self.nodes_per_unit as f64, upper)
    }

    fn build(&self, step: f64, upper: f64) -> Grid {
        let intervals = (upper / step).ceil().max(1.0);
        if intervals > self.max_nodes as f64 {
            CAPPED_GRIDS.fetch_add(1, Ordering::Relaxed);
            Grid {
                step: upper / self.max_nodes as f64,
                intervals: self.max_nodes,
            }
        } else {
            Grid {
                step,
                intervals: intervals as usize,
            }
        }
    }

    /// Smallest `T ≥ start` with `envelope(T) ≤ absolute_tolerance`, found by
    /// doubling then bisection.
    fn envelope_upper(&self, start: f64, envelope: impl Fn(f64) -> f64) -> f64 {
        let tol = self.absolute_tolerance;
        if envelope(start) <= tol {
            return start;
        }
        let mut lo = start;
        let mut hi = start * 2.0;
        let limit = start * 1e12;
        while envelope(hi) > tol {
            lo = hi;
            hi *= 2.0;
            if hi > limit {
                return hi;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if envelope(mid) > tol {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-6 * hi {
                break;
            }
        }
        hi
    }

    pub(crate) fn far_tail_sigmas(&self) -> f64 {
        FAR_TAIL_SIGMAS.max(self.multiplier())
    }
}

/// Uniform trapezoid grid on `[0, intervals · step]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Grid {
    pub step: f64,
    pub intervals: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Trapezoid weight including the step.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.intervals {
            0.5 * self.step
        } else {
            self.step
        }
    }

    pub fn upper(&self) -> f64 {
        self.node(self.intervals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut q = QuadratureSpec::default();
        assert!(q.validate().is_ok());
        q.nodes_per_unit = 7;
        assert!(q.validate().is_err());
        q.nodes_per_unit = 8;
        q.truncation = Truncation::FixedUpper(0.0);
        assert!(q.validate().is_err());
        q.truncation = Truncation::FixedUpper(10.0);
        q.absolute_tolerance = 0.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn fixed_grid_uses_literal_step() {
        let q = QuadratureSpec {
            truncation: Truncation::FixedUpper(5.0),
            nodes_per_unit: 10,
            ..Default::default()
        };
        let g = q.inversion_grid(1.0, |_| 1.0);
        assert_eq!(g.intervals, 50);
        assert!((g.upper() - 5.0).abs() < 1e-12);
        let total: f64 = (0..g.len()).map(|k| g.weight(k)).sum();
        assert!((total - 5.0).abs() < 1e-12);
    }

    #[test]
    fn auto_grid_reaches_tolerance() {
        let q = QuadratureSpec::default();
        let beta: f64 = 1.0;
        let env = |t: f64| 1.0 / (1.0 + beta * beta * t * t);
        let g = q.inversion_grid(2f64.sqrt(), env);
        assert!(env(g.upper()) <= q.absolute_tolerance * 1.0001);
        assert!(env(g.upper() * 0.99) > q.absolute_tolerance);
        // Gaussian: the multiplier floor dominates
        let g = q.inversion_grid(1.0, |t: f64| (-0.5 * t * t).exp());
        assert!((g.upper() - 8.0).abs() < 0.1);
    }

    #[test]
    fn node_cap() {
        let q = QuadratureSpec {
            max_nodes: 100,
            ..Default::default()
        };
        let g = q.inversion_grid(1.0, |t: f64| 1.0 / (1.0 + t * t));
        assert_eq!(g.intervals, 100);
        assert!(capped_grid_count() >= 1);
    }
}
