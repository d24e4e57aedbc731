use num_complex::Complex64;

use super::dist::{Mixture, ScalarDist};
use super::CfError;

/// Characteristic function of `y = cᵀz + g` for independent scalar components `z_i`.
///
/// `cf_y(t) = exp(i t g) ∏ cf_i(c_i t)`.
#[derive(Debug, Clone)]
pub struct LinComboCF<'a> {
    coefficients: Vec<f64>,
    components: &'a [ScalarDist],
    offset: f64,
}

impl<'a> LinComboCF<'a> {
    pub fn new(
        coefficients: Vec<f64>,
        components: &'a [ScalarDist],
        offset: f64,
    ) -> Result<Self, CfError> {
        if coefficients.len() != components.len() {
            return Err(CfError::LengthMismatch {
                coefficients: coefficients.len(),
                components: components.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(CfError::InvalidParameter(
                "coefficients and offset must be finite".into(),
            ));
        }
        Ok(Self {
            coefficients,
            components,
            offset,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn components(&self) -> &'a [ScalarDist] {
        self.components
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::from_polar(1.0, t * self.offset);
        for (c, d) in self.coefficients.iter().zip(self.components) {
            if *c != 0.0 {
                acc *= d.cf(c * t);
            }
        }
        acc
    }

    pub fn mean(&self) -> f64 {
        self.offset
            + self
                .coefficients
                .iter()
                .zip(self.components)
                .map(|(c, d)| c * d.mean())
                .sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(self.components)
            .map(|(c, d)| c * c * d.variance())
            .sum()
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// True when the combination is almost surely constant.
    pub fn is_degenerate(&self) -> bool {
        self.variance() <= f64::MIN_POSITIVE
    }

    /// Upper bound on `|cf_y(t)|`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(self.components)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, d)| d.envelope(c * t))
            .product()
    }

    pub(crate) fn kernel(&self) -> Kernel<'a> {
        Kernel::new(self)
    }

    pub(crate) fn ensure_nondegenerate(&self) -> Result<(), CfError> {
        if self.is_degenerate() {
            Err(CfError::DegenerateDistribution { value: self.mean() })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Factor {
    Gaussian { variance: f64 },
    Laplace { scale_sq: f64 },
    Mixture { slot: usize },
}

/// Prepared evaluator for the *centered* characteristic function
/// `φ̃(t) = exp(-i t E[y]) cf_y(t)`, with analytic derivatives in the
/// coefficients. Gaussian factors are merged into a single exponent.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<'a> {
    mean: f64,
    variance: f64,
    gauss_var: f64,
    laplace_sq: Vec<f64>,
    mixtures: Vec<(f64, &'a Mixture)>,
    /// per component: (coefficient, component mean, factor)
    factors: Vec<(f64, f64, Factor)>,
}

/// Reusable buffers for [`Kernel::accumulate`].
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    mix_vals: Vec<Complex64>,
    mix_ders: Vec<Complex64>,
    suffix: Vec<Complex64>,
}

impl<'a> Kernel<'a> {
    fn new(lc: &LinComboCF<'a>) -> Self {
        let mut gauss_var = 0.0;
        let mut laplace_sq = Vec::new();
        let mut mixtures = Vec::new();
        let mut factors = Vec::with_capacity(lc.coefficients.len());
        for (&c, d) in lc.coefficients.iter().zip(lc.components) {
            let factor = match d {
                ScalarDist::Gaussian { variance, .. } => {
                    gauss_var += c * c * variance;
                    Factor::Gaussian {
                        variance: *variance,
                    }
                }
                ScalarDist::Laplace { scale, .. } => {
                    if c != 0.0 {
                        laplace_sq.push(c * c * scale * scale);
                    }
                    Factor::Laplace {
                        scale_sq: scale * scale,
                    }
                }
                ScalarDist::GaussianMixture(m) => {
                    let slot = mixtures.len();
                    mixtures.push((c, m));
                    Factor::Mixture { slot }
                }
            };
            factors.push((c, d.mean(), factor));
        }
        Self {
            mean: lc.mean(),
            variance: lc.variance(),
            gauss_var,
            laplace_sq,
            mixtures,
            factors,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn component_means(&self) -> impl Iterator<Item = f64> + '_ {
        self.factors.iter().map(|f| f.1)
    }

    /// Product of the non-mixture factors (real and strictly positive).
    fn base(&self, t: f64) -> f64 {
        let t2 = t * t;
        let mut b = (-0.5 * self.gauss_var * t2).exp();
        for s in &self.laplace_sq {
            b /= 1.0 + s * t2;
        }
        b
    }

    pub fn centered(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::new(self.base(t), 0.0);
        for (c, m) in &self.mixtures {
            if *c != 0.0 {
                acc *= mixture_centered(m, c * t);
            }
        }
        acc
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let mut e = self.base(t);
        for (c, m) in &self.mixtures {
            if *c != 0.0 {
                let s = c * t;
                e *= m
                    .components()
                    .map(|(w, _, v)| w * (-0.5 * v * s * s).exp())
                    .sum::<f64>();
            }
        }
        e
    }

    /// Accumulates `Re(ω · e^{-i t μ} ∂cf/∂θ)` for every coefficient and the
    /// offset, where `μ` is the mean of the combination.
    ///
    /// Returns the centered value `φ̃(t)` used for the derivatives.
    pub fn accumulate(
        &self,
        t: f64,
        omega: Complex64,
        scratch: &mut Scratch,
        d_coefficients: &mut [f64],
        d_offset: &mut f64,
    ) -> Complex64 {
        let t2 = t * t;
        let base = self.base(t);
        let nm = self.mixtures.len();
        scratch.mix_vals.clear();
        scratch.mix_ders.clear();
        for (c, m) in &self.mixtures {
            let s = c * t;
            let (val, der) = mixture_centered_with_derivative(m, s);
            scratch.mix_vals.push(val);
            scratch.mix_ders.push(der);
        }
        // suffix[l] = ∏_{k >= l} mix_vals[k]
        scratch.suffix.clear();
        scratch.suffix.resize(nm + 1, Complex64::new(1.0, 0.0));
        for l in (0..nm).rev() {
            scratch.suffix[l] = scratch.suffix[l + 1] * scratch.mix_vals[l];
        }
        let phi = scratch.suffix[0] * base;
        let z = omega * phi;
        // d/dμ term: Re(ω φ̃ i t) = -Im(z) t
        let mean_term = -z.im * t;
        *d_offset += mean_term;

        let mut prefix = Complex64::new(1.0, 0.0);
        for ((c, mu, factor), out) in self.factors.iter().zip(d_coefficients.iter_mut()) {
            let mut g = mean_term * mu;
            match factor {
                Factor::Gaussian { variance } => {
                    g += z.re * (-c * variance * t2);
                }
                Factor::Laplace { scale_sq } => {
                    g += z.re * (-2.0 * scale_sq * c * t2 / (1.0 + scale_sq * c * c * t2));
                }
                Factor::Mixture { slot, .. } => {
                    let others = prefix * scratch.suffix[slot + 1];
                    let dphi = others * scratch.mix_ders[*slot] * (base * t);
                    g += (omega * dphi).re;
                    prefix *= scratch.mix_vals[*slot];
                }
            }
            *out += g;
        }
        phi
    }
}

fn mixture_centered(m: &Mixture, s: f64) -> Complex64 {
    let mean = m.mean();
    m.components()
        .map(|(w, mu, v)| Complex64::from_polar(w * (-0.5 * v * s * s).exp(), s * (mu - mean)))
        .sum()
}

/// Value of the centered mixture CF at `s` and its derivative in `s`.
fn mixture_centered_with_derivative(m: &Mixture, s: f64) -> (Complex64, Complex64) {
    let mean = m.mean();
    let mut val = Complex64::new(0.0, 0.0);
    let mut der = Complex64::new(0.0, 0.0);
    for (w, mu, v) in m.components() {
        let term = Complex64::from_polar(w * (-0.5 * v * s * s).exp(), s * (mu - mean));
        val += term;
        der += term * Complex64::new(-v * s, mu - mean);
    }
    (val, der)
}
