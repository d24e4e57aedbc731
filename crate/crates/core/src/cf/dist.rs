//! Closed-form univariate distributions used for initial states,
//! disturbances and terminal targets.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use super::CfError;

/// Finite Gaussian mixture with per-component means and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    mean: f64,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self, CfError> {
        if weights.is_empty() {
            return Err(CfError::InvalidParameter(
                "mixture needs at least one component".into(),
            ));
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(CfError::InvalidParameter(format!(
                "mixture lengths differ: {} weights, {} means, {} variances",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CfError::InvalidParameter(
                "mixture weights must be nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CfError::InvalidParameter(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(CfError::InvalidParameter(
                "mixture means must be finite".into(),
            ));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CfError::InvalidParameter(
                "mixture variances must be positive".into(),
            ));
        }
        let mean = weights.iter().zip(&means).map(|(w, m)| w * m).sum();
        Ok(Self {
            weights,
            means,
            variances,
            mean,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Iterator over `(weight, mean, variance)` triples.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| (*w, *m, *v))
    }
}

/// A univariate distribution with a closed-form characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarDist {
    /// Normal distribution. A zero variance is allowed and denotes a point mass.
    Gaussian {
        mean: f64,
        variance: f64,
    },
    /// Laplace distribution with density `exp(-|x - location| / scale) / (2 scale)`.
    Laplace {
        location: f64,
        scale: f64,
    },
    GaussianMixture(Mixture),
}

impl ScalarDist {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self, CfError> {
        if !mean.is_finite() {
            return Err(CfError::InvalidParameter(
                "gaussian mean must be finite".into(),
            ));
        }
        if !variance.is_finite() || variance < 0.0 {
            return Err(CfError::InvalidParameter(format!(
                "gaussian variance must be nonnegative (got {variance})"
            )));
        }
        Ok(Self::Gaussian { mean, variance })
    }

    pub fn laplace(location: f64, scale: f64) -> Result<Self, CfError> {
        if !location.is_finite() {
            return Err(CfError::InvalidParameter(
                "laplace location must be finite".into(),
            ));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(CfError::InvalidParameter(format!(
                "laplace scale must be positive (got {scale})"
            )));
        }
        Ok(Self::Laplace { location, scale })
    }

    pub fn mixture(
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self, CfError> {
        Mixture::new(weights, means, variances).map(Self::GaussianMixture)
    }

    /// Re-checks the parameter invariants; useful for values built from the
    /// public enum fields directly.
    pub fn validate(&self) -> Result<(), CfError> {
        match self {
            Self::Gaussian { mean, variance } => Self::gaussian(*mean, *variance).map(|_| ()),
            Self::Laplace { location, scale } => Self::laplace(*location, *scale).map(|_| ()),
            Self::GaussianMixture(m) => {
                Mixture::new(m.weights.clone(), m.means.clone(), m.variances.clone()).map(|_| ())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Laplace { location, .. } => *location,
            Self::GaussianMixture(m) => m.mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian { variance, .. } => *variance,
            Self::Laplace { scale, .. } => 2.0 * scale * scale,
            Self::GaussianMixture(m) => m
                .components()
                .map(|(w, mu, var)| w * (var + (mu - m.mean) * (mu - m.mean)))
                .sum(),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// `E[exp(i t w)]`.
    pub fn cf(&self, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, t * self.mean()) * self.centered_cf(t)
    }

    /// Characteristic function of `w - E[w]`.
    pub fn centered_cf(&self, t: f64) -> Complex64 {
        match self {
            Self::Gaussian { variance, .. } => Complex64::new((-0.5 * variance * t * t).exp(), 0.0),
            Self::Laplace { scale, .. } => {
                let bt = scale * t;
                Complex64::new(1.0 / (1.0 + bt * bt), 0.0)
            }
            Self::GaussianMixture(m) => m
                .components()
                .map(|(w, mu, var)| {
                    Complex64::from_polar(w * (-0.5 * var * t * t).exp(), t * (mu - m.mean))
                })
                .sum(),
        }
    }

    /// Upper bound on `|cf(t)|`, nonincreasing in `|t|`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self {
            Self::Gaussian { variance, .. } => (-0.5 * variance * t * t).exp(),
            Self::Laplace { scale, .. } => {
                let bt = scale * t;
                1.0 / (1.0 + bt * bt)
            }
            Self::GaussianMixture(m) => m
                .components()
                .map(|(w, _, var)| w * (-0.5 * var * t * t).exp())
                .sum(),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => normal_pdf(z, *mean, *variance),
            Self::Laplace { location, scale } => {
                (-(z - location).abs() / scale).exp() / (2.0 * scale)
            }
            Self::GaussianMixture(m) => m
                .components()
                .map(|(w, mu, var)| w * normal_pdf(z, mu, var))
                .sum(),
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => normal_cdf(z, *mean, *variance),
            Self::Laplace { location, scale } => {
                let u = (z - location) / scale;
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
            Self::GaussianMixture(m) => m
                .components()
                .map(|(w, mu, var)| w * normal_cdf(z, mu, var))
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { mean, variance } => {
                if *variance == 0.0 {
                    *mean
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    mean + variance.sqrt() * z
                }
            }
            Self::Laplace { location, scale } => {
                // inverse cdf on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Self::GaussianMixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m.weights.len() - 1;
                for (j, w) in m.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                m.means[pick] + m.variances[pick].sqrt() * z
            }
        }
    }
}

pub(crate) fn normal_pdf(z: f64, mean: f64, variance: f64) -> f64 {
    let d = z - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}

pub(crate) fn normal_cdf(z: f64, mean: f64, variance: f64) -> f64 {
    if variance == 0.0 {
        return if z >= mean { 1.0 } else { 0.0 };
    }
    0.5 * erfc(-(z - mean) / (SQRT_2 * variance.sqrt()))
}
