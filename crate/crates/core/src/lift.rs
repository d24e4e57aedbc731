//! Lifted (horizon-stacked) dynamics and the causal affine
//! disturbance-feedback controller `U = K(𝒜x₀ + 𝒟W) + v`.

use nalgebra::{DMatrix, DVector, RowDVector};
use thiserror::Error;

use crate::cf::{CfError, LinComboCF, ScalarDist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("gain entry ({row}, {col}) violates causality")]
    NonCausal { row: usize, col: usize },
    #[error(transparent)]
    Cf(#[from] CfError),
}

fn mismatch(msg: impl Into<String>) -> LiftError {
    LiftError::DimensionMismatch(msg.into())
}

/// `x_{k+1} = A_k x_k + B_k u_k + D_k w_k` for `k = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvSystem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    d: Vec<DMatrix<f64>>,
}

impl LtvSystem {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        d: Vec<DMatrix<f64>>,
    ) -> Result<Self, LiftError> {
        let horizon = a.len();
        if horizon == 0 {
            return Err(mismatch("horizon must be positive"));
        }
        if b.len() != horizon || d.len() != horizon {
            return Err(mismatch(format!(
                "{} A, {} B and {} D matrices for one horizon",
                horizon,
                b.len(),
                d.len()
            )));
        }
        let n = a[0].nrows();
        let (m, p) = (b[0].ncols(), d[0].ncols());
        if n == 0 || m == 0 || p == 0 {
            return Err(mismatch(
                "state, input and disturbance dimensions must be positive",
            ));
        }
        for k in 0..horizon {
            if a[k].shape() != (n, n) || b[k].shape() != (n, m) || d[k].shape() != (n, p) {
                return Err(mismatch(format!(
                    "stage {k} matrices do not match (n, m, p) = ({n}, {m}, {p})"
                )));
            }
            if a[k]
                .iter()
                .chain(b[k].iter())
                .chain(d[k].iter())
                .any(|x| !x.is_finite())
            {
                return Err(LiftError::NonFinite("system matrices"));
            }
        }
        Ok(Self { a, b, d })
    }

    pub fn time_invariant(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self, LiftError> {
        Self::new(vec![a; horizon], vec![b; horizon], vec![d; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a[0].nrows(), self.b[0].ncols(), self.d[0].ncols())
    }

    pub fn a(&self, k: usize) -> &DMatrix<f64> {
        &self.a[k]
    }

    pub fn b(&self, k: usize) -> &DMatrix<f64> {
        &self.b[k]
    }

    pub fn d(&self, k: usize) -> &DMatrix<f64> {
        &self.d[k]
    }
}

/// Stacked maps `X = 𝒜x₀ + ℬU + 𝒟W` with `X = [x_0; …; x_N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    n: usize,
    m: usize,
    p: usize,
    horizon: usize,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DMatrix<f64>,
}

pub fn lift(sys: &LtvSystem) -> LiftedSystem {
    let (n, m, p) = sys.dims();
    let horizon = sys.horizon();
    let rows = (horizon + 1) * n;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DMatrix::zeros(rows, horizon * m);
    let mut d = DMatrix::zeros(rows, horizon * p);
    a.view_mut((0, 0), (n, n)).fill_with_identity();
    for k in 1..=horizon {
        let ak = sys.a(k - 1);
        let prev = a.view(((k - 1) * n, 0), (n, n)).into_owned();
        a.view_mut((k * n, 0), (n, n)).copy_from(&(ak * prev));
        // Φ(k, j+1) B_j = A_{k-1} Φ(k-1, j+1) B_j, and Φ(k, k) = I
        for j in 0..k - 1 {
            let pb = b.view(((k - 1) * n, j * m), (n, m)).into_owned();
            b.view_mut((k * n, j * m), (n, m)).copy_from(&(ak * pb));
            let pd = d.view(((k - 1) * n, j * p), (n, p)).into_owned();
            d.view_mut((k * n, j * p), (n, p)).copy_from(&(ak * pd));
        }
        b.view_mut((k * n, (k - 1) * m), (n, m))
            .copy_from(sys.b(k - 1));
        d.view_mut((k * n, (k - 1) * p), (n, p))
            .copy_from(sys.d(k - 1));
    }
    LiftedSystem {
        n,
        m,
        p,
        horizon,
        a,
        b,
        d,
    }
}

impl LiftedSystem {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `(n, m, p)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.p)
    }

    pub fn state_len(&self) -> usize {
        (self.horizon + 1) * self.n
    }

    pub fn input_len(&self) -> usize {
        self.horizon * self.m
    }

    pub fn disturbance_len(&self) -> usize {
        self.horizon * self.p
    }

    /// 𝒜
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// ℬ
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// 𝒟
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `E_k` with `E_k X = x_k`, for `k = 0..=N`.
    pub fn state_selector(&self, k: usize) -> DMatrix<f64> {
        assert!(k <= self.horizon, "stage {k} beyond horizon");
        let mut e = DMatrix::zeros(self.n, self.state_len());
        e.view_mut((0, k * self.n), (self.n, self.n))
            .fill_with_identity();
        e
    }

    /// `F_k` with `F_k U = u_k`, for `k = 0..N`.
    pub fn input_selector(&self, k: usize) -> DMatrix<f64> {
        assert!(k < self.horizon, "input stage {k} beyond horizon");
        let mut f = DMatrix::zeros(self.m, self.input_len());
        f.view_mut((0, k * self.m), (self.m, self.m))
            .fill_with_identity();
        f
    }

    /// Row `αᵀE_k` of length `(N+1)n`.
    pub fn state_row(&self, alpha: &[f64], k: usize) -> RowDVector<f64> {
        assert_eq!(alpha.len(), self.n);
        assert!(k <= self.horizon);
        let mut r = RowDVector::zeros(self.state_len());
        r.columns_mut(k * self.n, self.n).copy_from_slice(alpha);
        r
    }

    /// Row `aᵀF_k` of length `Nm`.
    pub fn input_row(&self, a: &[f64], k: usize) -> RowDVector<f64> {
        assert_eq!(a.len(), self.m);
        assert!(k < self.horizon);
        let mut r = RowDVector::zeros(self.input_len());
        r.columns_mut(k * self.m, self.m).copy_from_slice(a);
        r
    }

    /// Causal pattern of `K`: block row `k` may use block columns `0..=k`.
    pub fn is_causal_entry(&self, row: usize, col: usize) -> bool {
        col / self.n <= row / self.m
    }

    /// Number of free entries of a causal `K`.
    pub fn gain_parameters(&self) -> usize {
        (0..self.horizon).map(|k| self.m * (k + 1) * self.n).sum()
    }

    /// Number of entries in the flattened `(K, v)` decision vector.
    pub fn controller_parameters(&self) -> usize {
        self.gain_parameters() + self.input_len()
    }

    /// Zeros all non-causal entries in place.
    pub fn mask_gain(&self, k: &mut DMatrix<f64>) {
        for r in 0..k.nrows() {
            for c in 0..k.ncols() {
                if !self.is_causal_entry(r, c) {
                    k[(r, c)] = 0.0;
                }
            }
        }
    }

    /// Stacks per-component dimensions of `[x₀; W]`: state components first,
    /// then disturbances in time order.
    pub fn random_len(&self) -> usize {
        self.n + self.disturbance_len()
    }
}

/// Affine-disturbance-feedback controller with a structurally causal gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    k: DMatrix<f64>,
    v: DVector<f64>,
}

impl Controller {
    pub fn zeros(lift: &LiftedSystem) -> Self {
        Self {
            k: DMatrix::zeros(lift.input_len(), lift.state_len()),
            v: DVector::zeros(lift.input_len()),
        }
    }

    /// Rejects gains with nonzero non-causal entries.
    pub fn new(lift: &LiftedSystem, k: DMatrix<f64>, v: DVector<f64>) -> Result<Self, LiftError> {
        if k.shape() != (lift.input_len(), lift.state_len()) {
            return Err(mismatch(format!(
                "gain is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                lift.input_len(),
                lift.state_len()
            )));
        }
        if v.len() != lift.input_len() {
            return Err(mismatch(format!(
                "feedforward has {} entries, expected {}",
                v.len(),
                lift.input_len()
            )));
        }
        if k.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(LiftError::NonFinite("controller"));
        }
        for r in 0..k.nrows() {
            for c in 0..k.ncols() {
                if k[(r, c)] != 0.0 && !lift.is_causal_entry(r, c) {
                    return Err(LiftError::NonCausal { row: r, col: c });
                }
            }
        }
        Ok(Self { k, v })
    }

    /// Builds a controller from `[causal entries of K (row-major); v]`.
    pub fn from_params(lift: &LiftedSystem, params: &[f64]) -> Result<Self, LiftError> {
        if params.len() != lift.controller_parameters() {
            return Err(mismatch(format!(
                "{} parameters, expected {}",
                params.len(),
                lift.controller_parameters()
            )));
        }
        let mut ctrl = Self::zeros(lift);
        let mut it = params.iter().copied();
        for r in 0..ctrl.k.nrows() {
            let width = (r / lift.m + 1) * lift.n;
            for c in 0..width {
                ctrl.k[(r, c)] = it.next().unwrap_or_default();
            }
        }
        for x in ctrl.v.iter_mut() {
            *x = it.next().unwrap_or_default();
        }
        Ok(ctrl)
    }

    pub fn to_params(&self, lift: &LiftedSystem) -> Vec<f64> {
        let mut out = Vec::with_capacity(lift.controller_parameters());
        for r in 0..self.k.nrows() {
            let width = (r / lift.m + 1) * lift.n;
            out.extend((0..width).map(|c| self.k[(r, c)]));
        }
        out.extend(self.v.iter());
        out
    }

    /// Flattens a full-size gradient in `K` (and `v`) the same way as
    /// [`Self::to_params`], dropping non-causal entries.
    pub fn flatten_gradient(lift: &LiftedSystem, dk: &DMatrix<f64>, dv: &DVector<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(lift.controller_parameters());
        for r in 0..dk.nrows() {
            let width = (r / lift.m + 1) * lift.n;
            out.extend((0..width).map(|c| dk[(r, c)]));
        }
        out.extend(dv.iter());
        out
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn feedforward(&self) -> &DVector<f64> {
        &self.v
    }

    /// Converts state feedback `U = LX + g` to disturbance feedback:
    /// `K = L(I − ℬL)⁻¹`, `v = (I + Kℬ)g`.
    pub fn from_state_feedback(
        lift: &LiftedSystem,
        l: &DMatrix<f64>,
        g: &DVector<f64>,
    ) -> Result<Self, LiftError> {
        let i = DMatrix::identity(lift.state_len(), lift.state_len());
        // I − ℬL is unit lower triangular
        let m = &i - lift.b() * l;
        let inv = m
            .try_inverse()
            .ok_or_else(|| mismatch("I - BL is singular"))?;
        let mut k = l * inv;
        lift.mask_gain(&mut k);
        let v = (DMatrix::identity(lift.input_len(), lift.input_len()) + &k * lift.b()) * g;
        Self::new(lift, k, v)
    }

    /// Inverse of [`Self::from_state_feedback`]: `L = (I + Kℬ)⁻¹K`,
    /// `g = (I + Kℬ)⁻¹v`.
    pub fn to_state_feedback(&self, lift: &LiftedSystem) -> (DMatrix<f64>, DVector<f64>) {
        let m = DMatrix::identity(lift.input_len(), lift.input_len()) + &self.k * lift.b();
        let inv = m.try_inverse().expect("I + KB is unit lower triangular");
        (&inv * &self.k, &inv * &self.v)
    }
}

/// `y = M_x0 x₀ + M_W W + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub x0: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub constant: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x0: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.x0 * x0 + &self.w * w + &self.constant
    }
}

fn check_controller(lift: &LiftedSystem, ctrl: &Controller) -> Result<(), LiftError> {
    if ctrl.k.shape() != (lift.input_len(), lift.state_len()) || ctrl.v.len() != lift.input_len() {
        return Err(mismatch("controller does not match the lifted system"));
    }
    Ok(())
}

/// `X = (I + ℬK)𝒜x₀ + (I + ℬK)𝒟W + ℬv`.
pub fn state_map(lift: &LiftedSystem, ctrl: &Controller) -> Result<AffineMap, LiftError> {
    check_controller(lift, ctrl)?;
    let closed = DMatrix::identity(lift.state_len(), lift.state_len()) + lift.b() * &ctrl.k;
    Ok(AffineMap {
        x0: &closed * lift.a(),
        w: &closed * lift.d(),
        constant: lift.b() * &ctrl.v,
    })
}

/// `U = K𝒜x₀ + K𝒟W + v`.
pub fn input_map(lift: &LiftedSystem, ctrl: &Controller) -> Result<AffineMap, LiftError> {
    check_controller(lift, ctrl)?;
    Ok(AffineMap {
        x0: &ctrl.k * lift.a(),
        w: &ctrl.k * lift.d(),
        constant: ctrl.v.clone(),
    })
}

/// Scalar `row · y` as a linear combination of the independent components
/// `[x₀; W]` (`components` in that order).
pub fn lincombo_of_row<'a>(
    row: &RowDVector<f64>,
    map: &AffineMap,
    components: &'a [ScalarDist],
) -> Result<LinComboCF<'a>, LiftError> {
    if row.len() != map.x0.nrows() {
        return Err(mismatch(format!(
            "row has {} entries, map has {} rows",
            row.len(),
            map.x0.nrows()
        )));
    }
    if components.len() != map.x0.ncols() + map.w.ncols() {
        return Err(mismatch(format!(
            "{} components for {} random inputs",
            components.len(),
            map.x0.ncols() + map.w.ncols()
        )));
    }
    let mu = row * &map.x0;
    let nu = row * &map.w;
    let coefficients = mu.iter().chain(nu.iter()).copied().collect();
    let offset = (row * &map.constant)[0];
    Ok(LinComboCF::new(coefficients, components, offset)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn double_integrator(dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 1)] = dt;
        a[(2, 3)] = dt;
        let mut b = DMatrix::zeros(4, 2);
        b[(0, 0)] = dt * dt / 2.0;
        b[(1, 0)] = dt;
        b[(2, 1)] = dt * dt / 2.0;
        b[(3, 1)] = dt;
        (a, b)
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_system(
        rng: &mut impl Rng,
        n: usize,
        m: usize,
        p: usize,
        horizon: usize,
    ) -> LtvSystem {
        LtvSystem::new(
            (0..horizon).map(|_| random_matrix(rng, n, n)).collect(),
            (0..horizon).map(|_| random_matrix(rng, n, m)).collect(),
            (0..horizon).map(|_| random_matrix(rng, n, p)).collect(),
        )
        .unwrap()
    }

    fn random_causal(
        rng: &mut impl Rng,
        lift: &LiftedSystem,
        rows: usize,
        cols: usize,
    ) -> DMatrix<f64> {
        let mut k = random_matrix(rng, rows, cols);
        lift.mask_gain(&mut k);
        k
    }

    #[test]
    fn scalar_single_step() {
        let sys =
            LtvSystem::time_invariant(dmatrix![2.0], dmatrix![1.0], dmatrix![1.0], 1).unwrap();
        let l = lift(&sys);
        assert_eq!(l.a(), &dmatrix![1.0; 2.0]);
        assert_eq!(l.b(), &dmatrix![0.0; 1.0]);
        assert_eq!(l.d(), &dmatrix![0.0; 1.0]);
    }

    #[test]
    fn integrator_accumulates_inputs() {
        let sys =
            LtvSystem::time_invariant(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], 2).unwrap();
        assert_eq!(lift(&sys).b(), &dmatrix![0.0, 0.0; 1.0, 0.0; 1.0, 1.0]);
    }

    #[test]
    fn double_integrator_power() {
        let (a, b) = double_integrator(1.0);
        let sys = LtvSystem::time_invariant(a.clone(), b.clone(), b, 5).unwrap();
        let l = lift(&sys);
        let mut oracle = DMatrix::identity(4, 4);
        for _ in 0..5 {
            oracle = &a * oracle;
        }
        assert_eq!(l.a().view((20, 0), (4, 4)).into_owned(), oracle);
        assert_eq!(l.gain_parameters(), 120);
        assert_eq!(l.controller_parameters(), 130);
    }

    #[test]
    fn structure_of_lifted_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = lift(&random_system(&mut rng, 3, 2, 2, 4));
        assert_eq!(
            l.a().view((0, 0), (3, 3)).into_owned(),
            DMatrix::identity(3, 3)
        );
        for k in 0..=4 {
            for j in k..4 {
                assert!(l.b().view((k * 3, j * 2), (3, 2)).iter().all(|x| *x == 0.0));
                assert!(l.d().view((k * 3, j * 2), (3, 2)).iter().all(|x| *x == 0.0));
            }
        }
        let x: DVector<f64> = DVector::from_fn(l.state_len(), |i, _| i as f64);
        for k in 0..=4 {
            assert_eq!(l.state_selector(k) * &x, x.rows(k * 3, 3).into_owned());
        }
        let u: DVector<f64> = DVector::from_fn(l.input_len(), |i, _| i as f64);
        for k in 0..4 {
            assert_eq!(l.input_selector(k) * &u, u.rows(k * 2, 2).into_owned());
        }
    }

    #[test]
    fn open_loop_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = lift(&random_system(&mut rng, 2, 1, 1, 3));
        let mut c = Controller::zeros(&l);
        let sm = state_map(&l, &c).unwrap();
        assert_eq!(&sm.x0, l.a());
        assert_eq!(&sm.w, l.d());
        assert!(sm.constant.iter().all(|x| *x == 0.0));
        c.v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sm = state_map(&l, &c).unwrap();
        assert_eq!(sm.constant, l.b() * &c.v);
        let im = input_map(&l, &c).unwrap();
        assert_eq!(im.constant, c.v);
        assert!(im.x0.iter().chain(im.w.iter()).all(|x| *x == 0.0));
    }

    /// Step-by-step simulation under `u_k = Σ_{j≤k} L_{kj} x_j + g_k`.
    fn simulate(
        sys: &LtvSystem,
        l: &DMatrix<f64>,
        g: &DVector<f64>,
        x0: &DVector<f64>,
        w: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (n, m, p) = sys.dims();
        let horizon = sys.horizon();
        let mut xs = DVector::zeros((horizon + 1) * n);
        let mut us = DVector::zeros(horizon * m);
        xs.rows_mut(0, n).copy_from(x0);
        for k in 0..horizon {
            let lk = l.view((k * m, 0), (m, (k + 1) * n));
            let uk = lk * xs.rows(0, (k + 1) * n) + g.rows(k * m, m);
            let xk = xs.rows(k * n, n).into_owned();
            let next = sys.a(k) * xk + sys.b(k) * &uk + sys.d(k) * w.rows(k * p, p);
            xs.rows_mut((k + 1) * n, n).copy_from(&next);
            us.rows_mut(k * m, m).copy_from(&uk);
        }
        (xs, us)
    }

    #[test]
    fn maps_agree_with_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, m, p, horizon) in &[(1, 1, 1, 2), (3, 2, 2, 4), (2, 1, 3, 5)] {
            let sys = random_system(&mut rng, n, m, p, horizon);
            let lf = lift(&sys);
            let lgain = random_causal(&mut rng, &lf, lf.input_len(), lf.state_len()) * 0.5;
            let g = DVector::from_fn(lf.input_len(), |_, _| rng.random_range(-1.0..1.0));
            let ctrl = Controller::from_state_feedback(&lf, &lgain, &g).unwrap();
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let w = DVector::from_fn(lf.disturbance_len(), |_, _| rng.random_range(-1.0..1.0));
            let (xs, us) = simulate(&sys, &lgain, &g, &x0, &w);
            let x = state_map(&lf, &ctrl).unwrap().apply(&x0, &w);
            let u = input_map(&lf, &ctrl).unwrap().apply(&x0, &w);
            assert!((x - xs).amax() < 1e-10);
            assert!((u - us).amax() < 1e-10);
        }
    }

    #[test]
    fn state_feedback_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let sys = random_system(&mut rng, 2, 2, 1, 4);
            let lf = lift(&sys);
            let lgain = random_causal(&mut rng, &lf, lf.input_len(), lf.state_len());
            let g = DVector::from_fn(lf.input_len(), |_, _| rng.random_range(-1.0..1.0));
            let ctrl = Controller::from_state_feedback(&lf, &lgain, &g).unwrap();
            // the direct-inversion identity K = (I − Lℬ)⁻¹L
            let i = DMatrix::<f64>::identity(lf.input_len(), lf.input_len());
            let alt = (&i - &lgain * lf.b()).try_inverse().unwrap() * &lgain;
            assert!((&alt - ctrl.gain()).amax() < 1e-10);
            let (l2, g2) = ctrl.to_state_feedback(&lf);
            assert!((l2 - &lgain).amax() < 1e-10);
            assert!((g2 - &g).amax() < 1e-10);
        }
    }

    #[test]
    fn causality_of_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(&mut rng, 2, 1, 2, 5);
        let lf = lift(&sys);
        let k = random_causal(&mut rng, &lf, lf.input_len(), lf.state_len());
        let ctrl = Controller::new(&lf, k, DVector::zeros(lf.input_len())).unwrap();
        let im = input_map(&lf, &ctrl).unwrap();
        let x0 = DVector::from_element(2, 0.3);
        let w = DVector::from_fn(lf.disturbance_len(), |i, _| (i as f64).sin());
        let base = im.apply(&x0, &w);
        for j in 0..5 {
            let mut wp = w.clone();
            for i in 0..2 {
                wp[j * 2 + i] += 1e-3;
            }
            let pert = im.apply(&x0, &wp);
            for k in 0..=j {
                assert_eq!(pert[k], base[k], "w_{j} moved u_{k}");
            }
        }
    }

    #[test]
    fn rejects_noncausal_gain() {
        let sys =
            LtvSystem::time_invariant(dmatrix![1.0], dmatrix![1.0], dmatrix![1.0], 2).unwrap();
        let lf = lift(&sys);
        let k = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        assert_eq!(
            Controller::new(&lf, k, DVector::zeros(2)),
            Err(LiftError::NonCausal { row: 0, col: 1 })
        );
        assert!(matches!(
            LtvSystem::new(
                vec![dmatrix![1.0]],
                vec![dmatrix![1.0, 2.0; 3.0, 4.0]],
                vec![dmatrix![1.0]]
            ),
            Err(LiftError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn params_round_trip() {
        let (a, b) = double_integrator(1.0);
        let lf = lift(&LtvSystem::time_invariant(a, b.clone(), b, 5).unwrap());
        let params: Vec<f64> = (0..lf.controller_parameters())
            .map(|i| i as f64 * 0.01)
            .collect();
        let c = Controller::from_params(&lf, &params).unwrap();
        assert_eq!(c.to_params(&lf), params);
        assert!(Controller::new(&lf, c.gain().clone(), c.feedforward().clone()).is_ok());
    }

    #[test]
    fn lincombo_rows() {
        let (a, b) = double_integrator(1.0);
        let lf = lift(&LtvSystem::time_invariant(a, b.clone(), b, 5).unwrap());
        let comps: Vec<ScalarDist> = (0..lf.random_len())
            .map(|_| ScalarDist::gaussian(0.0, 1.0).unwrap())
            .collect();
        let ctrl = Controller::zeros(&lf);
        let sm = state_map(&lf, &ctrl).unwrap();
        let lc = lincombo_of_row(&lf.state_row(&[1.0, 0.0, 0.0, 0.0], 0), &sm, &comps).unwrap();
        assert_eq!(&lc.coefficients()[..4], &[1.0, 0.0, 0.0, 0.0]);
        assert!(lc.coefficients()[4..].iter().all(|c| *c == 0.0));
        let alpha = [1.0, 1.0, 0.0, 0.0];
        let lc = lincombo_of_row(&lf.state_row(&alpha, 5), &sm, &comps).unwrap();
        let expect = RowDVector::from_row_slice(&alpha) * lf.a().rows(20, 4);
        assert_eq!(&lc.coefficients()[..4], expect.as_slice());
    }

    #[test]
    fn lincombo_mean_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_system(&mut rng, 2, 1, 1, 3);
        let lf = lift(&sys);
        let k = random_causal(&mut rng, &lf, lf.input_len(), lf.state_len());
        let v = DVector::from_fn(lf.input_len(), |_, _| rng.random_range(-1.0..1.0));
        let ctrl = Controller::new(&lf, k, v).unwrap();
        let comps = vec![
            ScalarDist::gaussian(1.0, 0.2).unwrap(),
            ScalarDist::laplace(-0.5, 0.3).unwrap(),
            ScalarDist::mixture(vec![0.5, 0.5], vec![0.0, 1.0], vec![0.1, 0.1]).unwrap(),
            ScalarDist::gaussian(0.2, 1.0).unwrap(),
            ScalarDist::laplace(0.1, 0.5).unwrap(),
        ];
        let sm = state_map(&lf, &ctrl).unwrap();
        let row = lf.state_row(&[0.7, -0.4], 3);
        let lc = lincombo_of_row(&row, &sm, &comps).unwrap();
        let samples = 100_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..samples {
            let z: Vec<f64> = comps.iter().map(|d| d.sample(&mut rng)).collect();
            let x = sm.apply(
                &DVector::from_column_slice(&z[..2]),
                &DVector::from_column_slice(&z[2..]),
            );
            let y = (&row * x)[0];
            sum += y;
            sq += y * y;
        }
        let mean = sum / samples as f64;
        let se = ((sq / samples as f64 - mean * mean) / samples as f64).sqrt();
        assert!(
            (mean - lc.mean()).abs() < 3.0 * se,
            "{mean} vs {} (se {se})",
            lc.mean()
        );
    }
}
