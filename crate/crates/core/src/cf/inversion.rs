use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Normal};

use super::lincombo::{Kernel, LinComboCF, Scratch};
use super::quadrature::{Grid, QuadratureSpec};
use super::CfError;

static CLAMPED_PDF: AtomicU64 = AtomicU64::new(0);

/// Number of pdf evaluations whose quadrature result was negative and got
/// clamped to zero.
pub fn clamped_pdf_count() -> u64 {
    CLAMPED_PDF.load(Ordering::Relaxed)
}

/// Largest relative standard deviation still treated as a point mass by the
/// quantile routines.
const POINT_MASS_REL_STD: f64 = 1e-12;

/// Gil-Pelaez inversion of the cdf of `lc` at `y`, clamped to `[0, 1]`.
pub fn gil_pelaez_cdf(lc: &LinComboCF<'_>, y: f64, q: &QuadratureSpec) -> Result<f64, CfError> {
    Ok(CfTable::new(lc, q)?.cdf(y))
}

/// Fourier inversion of the pdf of `lc` at `z`, clamped to be nonnegative.
pub fn invert_pdf(lc: &LinComboCF<'_>, z: f64, q: &QuadratureSpec) -> Result<f64, CfError> {
    Ok(CfTable::new(lc, q)?.pdf(z))
}

/// Cdf value with derivatives in the coefficients, the offset and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGradient {
    pub value: f64,
    pub d_coefficients: Vec<f64>,
    pub d_offset: f64,
    pub d_y: f64,
}

/// Quantile `Q` with `F(Q) = p` and derivatives in the coefficients, the
/// offset and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGradient {
    pub value: f64,
    pub d_coefficients: Vec<f64>,
    pub d_offset: f64,
    pub d_p: f64,
}

/// Centered characteristic function tabulated on a trapezoid grid, reused
/// for many cdf and pdf evaluations of the same random variable.
///
/// The discrete cdf and pdf returned by the `*_raw` methods are exact
/// derivatives of each other, which keeps Newton iterations and gradients
/// consistent.
#[derive(Debug, Clone)]
pub struct CfTable<'a> {
    kernel: Kernel<'a>,
    grid: Grid,
    phi: Vec<Complex64>,
    mean: f64,
    sigma: f64,
    far: f64,
}

impl<'a> CfTable<'a> {
    pub fn new(lc: &LinComboCF<'a>, q: &QuadratureSpec) -> Result<Self, CfError> {
        Self::build(lc, q, 0.0)
    }

    /// Table accurate for pdf evaluation over `mean ± half_width`.
    pub fn with_window(
        lc: &LinComboCF<'a>,
        q: &QuadratureSpec,
        half_width: f64,
    ) -> Result<Self, CfError> {
        Self::build(lc, q, half_width)
    }

    fn build(lc: &LinComboCF<'a>, q: &QuadratureSpec, half_width: f64) -> Result<Self, CfError> {
        q.validate()?;
        lc.ensure_nondegenerate()?;
        let kernel = lc.kernel();
        let sigma = kernel.std_dev();
        let grid = if half_width > 0.0 {
            q.window_grid(sigma, half_width, |t| kernel.envelope(t))
        } else {
            q.inversion_grid(sigma, |t| kernel.envelope(t))
        };
        let phi = (0..grid.len())
            .map(|k| kernel.centered(grid.node(k)))
            .collect();
        Ok(Self {
            mean: kernel.mean(),
            kernel,
            grid,
            phi,
            sigma,
            far: q.far_tail_sigmas().max(half_width / sigma),
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std_dev(&self) -> f64 {
        self.sigma
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn upper_limit(&self) -> f64 {
        self.grid.upper()
    }

    fn far_side(&self, y: f64) -> Option<f64> {
        let d = y - self.mean;
        if d >= self.far * self.sigma {
            Some(1.0)
        } else if d <= -self.far * self.sigma {
            Some(0.0)
        } else {
            None
        }
    }

    /// Calls `f(k, t_k, weight_k, e^{i t_k d} φ̃(t_k))` for every node.
    fn sweep(&self, d: f64, mut f: impl FnMut(usize, f64, f64, Complex64)) {
        let h = self.grid.step;
        let rot = Complex64::from_polar(1.0, h * d);
        let mut phase = Complex64::new(1.0, 0.0);
        for (k, phi) in self.phi.iter().enumerate() {
            if k % 512 == 0 {
                phase = Complex64::from_polar(1.0, k as f64 * h * d);
            }
            f(k, self.grid.node(k), self.grid.weight(k), phase * phi);
            phase *= rot;
        }
    }

    /// Discrete Gil-Pelaez sum without clamping.
    pub fn cdf_raw(&self, y: f64) -> f64 {
        let d = self.mean - y;
        let mut s = 0.0;
        self.sweep(d, |k, t, w, z| {
            s += if k == 0 { w * d } else { w * z.im / t };
        });
        0.5 - s / PI
    }

    /// Discrete pdf sum without clamping; the derivative of [`Self::cdf_raw`].
    pub fn pdf_raw(&self, z: f64) -> f64 {
        let mut s = 0.0;
        self.sweep(self.mean - z, |_, _, w, v| s += w * v.re);
        s / PI
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self.far_side(y) {
            Some(v) => v,
            None => self.cdf_raw(y).clamp(0.0, 1.0),
        }
    }

    pub fn pdf(&self, z: f64) -> f64 {
        if self.far_side(z).is_some() {
            return 0.0;
        }
        let p = self.pdf_raw(z);
        if p < 0.0 {
            CLAMPED_PDF.fetch_add(1, Ordering::Relaxed);
            0.0
        } else {
            p
        }
    }

    /// Cdf at `y` with derivatives. In the far tails the value is exactly 0
    /// or 1 and all derivatives vanish.
    pub fn cdf_gradient(&self, y: f64) -> CdfGradient {
        let n = self.kernel.dim();
        if let Some(v) = self.far_side(y) {
            return CdfGradient {
                value: v,
                d_coefficients: vec![0.0; n],
                d_offset: 0.0,
                d_y: 0.0,
            };
        }
        let (d_coefficients, d_offset) = self.raw_cdf_parameter_gradient(y);
        CdfGradient {
            value: self.cdf_raw(y).clamp(0.0, 1.0),
            d_coefficients,
            d_offset,
            d_y: self.pdf_raw(y),
        }
    }

    /// Derivatives of [`Self::cdf_raw`] at `y` in the coefficients and offset,
    /// with the grid held fixed.
    fn raw_cdf_parameter_gradient(&self, y: f64) -> (Vec<f64>, f64) {
        let mut dc = vec![0.0; self.kernel.dim()];
        let mut dg = 0.0;
        let mut scratch = Scratch::default();
        let d = self.mean - y;
        for k in 1..self.grid.len() {
            let t = self.grid.node(k);
            // ∂/∂θ Im(e^{-ity} cf)/t = Re(-i e^{itd} e^{-itμ} ∂cf/∂θ)/t
            let scale = -self.grid.weight(k) / (PI * t);
            let omega = Complex64::from_polar(scale, t * d) * Complex64::new(0.0, -1.0);
            self.kernel
                .accumulate(t, omega, &mut scratch, &mut dc, &mut dg);
        }
        // node 0 carries w0 (μ - y) with μ = g + Σ c_j m_j
        let w0 = -self.grid.weight(0) / PI;
        for (g, mj) in dc.iter_mut().zip(self.kernel.component_means()) {
            *g += w0 * mj;
        }
        (dc, dg + w0)
    }

    /// Solves `cdf_raw(Q) = p` by safeguarded Newton iteration.
    pub fn quantile(&self, p: f64) -> Result<f64, CfError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CfError::InvalidProbability(p));
        }
        let mut lo = self.mean - self.far * self.sigma;
        let mut hi = self.mean + self.far * self.sigma;
        let z = Normal::standard().inverse_cdf(p);
        let mut x = (self.mean + z * self.sigma).clamp(lo, hi);
        let tol = 1e-13 * self.sigma.max(self.mean.abs());
        for _ in 0..200 {
            let r = self.cdf_raw(x) - p;
            if r.abs() < 1e-15 {
                return Ok(x);
            }
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope = self.pdf_raw(x);
            let newton = x - r / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= tol || hi - lo <= tol {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Quantile with derivatives from the implicit function theorem.
    pub fn quantile_gradient(&self, p: f64) -> Result<QuantileGradient, CfError> {
        let value = self.quantile(p)?;
        let dens = self.pdf_raw(value).max(f64::MIN_POSITIVE);
        let (mut dc, dg) = self.raw_cdf_parameter_gradient(value);
        for g in &mut dc {
            *g = -*g / dens;
        }
        Ok(QuantileGradient {
            value,
            d_coefficients: dc,
            d_offset: -dg / dens,
            d_p: 1.0 / dens,
        })
    }
}

/// Quantile of `lc` at probability `p` with derivatives. Combinations that are
/// (numerically) point masses return their constant value, whose derivative
/// in the coefficients is the vector of component means.
pub fn quantile_with_gradient(
    lc: &LinComboCF<'_>,
    p: f64,
    q: &QuadratureSpec,
) -> Result<QuantileGradient, CfError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CfError::InvalidProbability(p));
    }
    let mean = lc.mean();
    if lc.std_dev() <= POINT_MASS_REL_STD * (1.0 + mean.abs()) {
        return Ok(QuantileGradient {
            value: mean,
            d_coefficients: lc.components().iter().map(|d| d.mean()).collect(),
            d_offset: 1.0,
            d_p: 0.0,
        });
    }
    CfTable::new(lc, q)?.quantile_gradient(p)
}
