//! Definition of the coupled slow-fast system
//!
//! ```text
//! dx  = f(x, r, xi) dt + sigma(x, r, xi) dw + int g(x, r, xi, z) N~(dt, dz)
//! dxi = (1/eps) kappa(x, xi) dt + (1/sqrt eps) varsigma(x, xi) dw1
//!       + int theta(x, xi, z) N1~(dt, dz)
//! ```
//!
//! with `r` the two-time-scale switching chain, and executable checks of the
//! Lipschitz and dissipativity hypotheses.

pub mod benchmarks;
mod jumps;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use jumps::{jump_compensator_drift, JumpMeasure};
pub use validate::{
    validate_dissipativity, validate_lipschitz, DissipativityConstants, LipschitzReport,
    RegimeLipschitz, SamplingSpec, StatePoint, GROWTH_SLACK,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::switching::TwoScaleGenerator;

/// `f(x, regime, xi)` or `g(x, regime, xi, z)` style vector output.
pub type SlowVectorFn<T> = Arc<dyn Fn(&[T], usize, &[T], &mut [T]) + Send + Sync>;
pub type SlowMatrixFn<T> = Arc<dyn Fn(&[T], usize, &[T], &mut Matrix<T>) + Send + Sync>;
pub type SlowJumpFn<T> = Arc<dyn Fn(&[T], usize, &[T], &[T], &mut [T]) + Send + Sync>;
pub type FastVectorFn<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;
pub type FastMatrixFn<T> = Arc<dyn Fn(&[T], &[T], &mut Matrix<T>) + Send + Sync>;
pub type FastJumpFn<T> = Arc<dyn Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync>;

/// The six coefficient functions. Unset coefficients are identically zero.
///
/// Every callback writes into an output buffer that is zeroed before the
/// call, and must be pure.
#[derive(Clone)]
pub struct CoefficientSet<T> {
    slow_dim: usize,
    fast_dim: usize,
    regimes: usize,
    drift: Option<SlowVectorFn<T>>,
    diffusion: Option<SlowMatrixFn<T>>,
    jump: Option<SlowJumpFn<T>>,
    fast_drift: Option<FastVectorFn<T>>,
    fast_diffusion: Option<FastMatrixFn<T>>,
    fast_jump: Option<FastJumpFn<T>>,
}

impl<T> fmt::Debug for CoefficientSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("slow_dim", &self.slow_dim)
            .field("fast_dim", &self.fast_dim)
            .field("regimes", &self.regimes)
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("jump", &self.jump.is_some())
            .field("fast_drift", &self.fast_drift.is_some())
            .field("fast_diffusion", &self.fast_diffusion.is_some())
            .field("fast_jump", &self.fast_jump.is_some())
            .finish()
    }
}

impl<T: Real> CoefficientSet<T> {
    pub fn new(slow_dim: usize, fast_dim: usize, regimes: usize) -> Self {
        Self {
            slow_dim,
            fast_dim,
            regimes,
            drift: None,
            diffusion: None,
            jump: None,
            fast_drift: None,
            fast_diffusion: None,
            fast_jump: None,
        }
    }

    pub fn with_drift(mut self, f: impl Fn(&[T], usize, &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn with_diffusion(
        mut self,
        f: impl Fn(&[T], usize, &[T], &mut Matrix<T>) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn with_jump(
        mut self,
        f: impl Fn(&[T], usize, &[T], &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        self.jump = Some(Arc::new(f));
        self
    }

    pub fn with_fast_drift(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.fast_drift = Some(Arc::new(f));
        self
    }

    pub fn with_fast_diffusion(
        mut self,
        f: impl Fn(&[T], &[T], &mut Matrix<T>) + Send + Sync + 'static,
    ) -> Self {
        self.fast_diffusion = Some(Arc::new(f));
        self
    }

    pub fn with_fast_jump(
        mut self,
        f: impl Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        self.fast_jump = Some(Arc::new(f));
        self
    }

    pub fn slow_dim(&self) -> usize {
        self.slow_dim
    }

    pub fn fast_dim(&self) -> usize {
        self.fast_dim
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn has_slow_jump(&self) -> bool {
        self.jump.is_some()
    }

    pub fn has_fast_jump(&self) -> bool {
        self.fast_jump.is_some()
    }

    pub fn has_slow_noise(&self) -> bool {
        self.diffusion.is_some()
    }

    pub fn has_fast_noise(&self) -> bool {
        self.fast_diffusion.is_some()
    }

    /// `f(x, regime, xi)`.
    #[inline]
    pub fn drift(&self, x: &[T], regime: usize, xi: &[T], out: &mut [T]) {
        out.fill(T::zero());
        if let Some(f) = &self.drift {
            f(x, regime, xi, out);
        }
    }

    /// `sigma(x, regime, xi)`, a `slow_dim x slow_dim` matrix.
    #[inline]
    pub fn diffusion(&self, x: &[T], regime: usize, xi: &[T], out: &mut Matrix<T>) {
        out.as_mut_slice().fill(T::zero());
        if let Some(f) = &self.diffusion {
            f(x, regime, xi, out);
        }
    }

    /// `g(x, regime, xi, z)`.
    #[inline]
    pub fn jump(&self, x: &[T], regime: usize, xi: &[T], z: &[T], out: &mut [T]) {
        out.fill(T::zero());
        if let Some(f) = &self.jump {
            f(x, regime, xi, z, out);
        }
    }

    /// `kappa(x, xi)`.
    #[inline]
    pub fn fast_drift(&self, x: &[T], xi: &[T], out: &mut [T]) {
        out.fill(T::zero());
        if let Some(f) = &self.fast_drift {
            f(x, xi, out);
        }
    }

    /// `varsigma(x, xi)`, a `fast_dim x fast_dim` matrix.
    #[inline]
    pub fn fast_diffusion(&self, x: &[T], xi: &[T], out: &mut Matrix<T>) {
        out.as_mut_slice().fill(T::zero());
        if let Some(f) = &self.fast_diffusion {
            f(x, xi, out);
        }
    }

    /// `theta(x, xi, z)`.
    #[inline]
    pub fn fast_jump(&self, x: &[T], xi: &[T], z: &[T], out: &mut [T]) {
        out.fill(T::zero());
        if let Some(f) = &self.fast_jump {
            f(x, xi, z, out);
        }
    }
}

/// `a_ij = sum_k sigma_ik sigma_kj`: the matrix product of `sigma` with
/// itself, as indexed. Equals `sigma sigma^T` whenever `sigma` is symmetric.
pub fn diffusion_matrix<T: Real>(sigma: &Matrix<T>) -> Matrix<T> {
    sigma.matmul(sigma)
}

/// `G_ij = sum_k g_ik g_kj` for a matrix-valued jump coefficient.
pub fn jump_matrix<T: Real>(g: &Matrix<T>) -> Matrix<T> {
    g.matmul(g)
}

/// A complete slow-fast model: coefficients, jump measure, switching and
/// initial data `(x0, xi0, r0)`.
#[derive(Clone, Debug)]
pub struct SlowFastModel<T> {
    coefficients: CoefficientSet<T>,
    jumps: JumpMeasure<T>,
    switching: TwoScaleGenerator<T>,
    x0: Vec<T>,
    xi0: Vec<T>,
    r0: usize,
}

impl<T: Real> SlowFastModel<T> {
    pub fn new(
        coefficients: CoefficientSet<T>,
        jumps: JumpMeasure<T>,
        switching: TwoScaleGenerator<T>,
        x0: Vec<T>,
        xi0: Vec<T>,
        r0: usize,
    ) -> Result<Self> {
        if coefficients.regimes() != switching.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients accept {} regimes, switching has {} states",
                coefficients.regimes(),
                switching.n_states()
            )));
        }
        if x0.len() != coefficients.slow_dim() || xi0.len() != coefficients.fast_dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial data ({}, {}) vs dimensions ({}, {})",
                x0.len(),
                xi0.len(),
                coefficients.slow_dim(),
                coefficients.fast_dim()
            )));
        }
        if r0 >= switching.n_states() {
            return Err(Error::InvalidInput(format!("initial regime {r0} out of range")));
        }
        if x0.iter().chain(&xi0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite initial data".into()));
        }
        Ok(Self { coefficients, jumps, switching, x0, xi0, r0 })
    }

    pub fn coefficients(&self) -> &CoefficientSet<T> {
        &self.coefficients
    }

    pub fn jumps(&self) -> &JumpMeasure<T> {
        &self.jumps
    }

    pub fn switching(&self) -> &TwoScaleGenerator<T> {
        &self.switching
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn xi0(&self) -> &[T] {
        &self.xi0
    }

    pub fn r0(&self) -> usize {
        self.r0
    }

    pub fn slow_dim(&self) -> usize {
        self.coefficients.slow_dim()
    }

    pub fn fast_dim(&self) -> usize {
        self.coefficients.fast_dim()
    }

    pub fn with_initial(self, x0: Vec<T>, xi0: Vec<T>, r0: usize) -> Result<Self> {
        Self::new(self.coefficients, self.jumps, self.switching, x0, xi0, r0)
    }

    pub fn with_switching(self, switching: TwoScaleGenerator<T>) -> Result<Self> {
        Self::new(self.coefficients, self.jumps, switching, self.x0, self.xi0, self.r0)
    }

    /// `a(x, regime, xi) = sigma sigma`.
    pub fn diffusion_matrix(&self, x: &[T], regime: usize, xi: &[T]) -> Matrix<T> {
        let d = self.slow_dim();
        let mut sigma = Matrix::zeros(d, d);
        self.coefficients.diffusion(x, regime, xi, &mut sigma);
        diffusion_matrix(&sigma)
    }

    /// `G(x, regime, xi, z)` with the vector `g` read as the diagonal matrix
    /// `diag(g)`, so `G = diag(g_i^2)`; in one dimension `G = g^2`.
    pub fn jump_matrix(&self, x: &[T], regime: usize, xi: &[T], z: &[T]) -> Matrix<T> {
        let mut g = vec![T::zero(); self.slow_dim()];
        self.coefficients.jump(x, regime, xi, z, &mut g);
        jump_matrix(&Matrix::from_diagonal(&g))
    }

    /// `int g(x, regime, xi, z) v(dz)`.
    pub fn slow_compensator(&self, x: &[T], regime: usize, xi: &[T], out: &mut [T]) {
        let c = &self.coefficients;
        jump_compensator_drift(&self.jumps, out, |z, o| c.jump(x, regime, xi, z, o));
    }

    /// `int theta(x, xi, z) v(dz)`.
    pub fn fast_compensator(&self, x: &[T], xi: &[T], out: &mut [T]) {
        let c = &self.coefficients;
        jump_compensator_drift(&self.jumps, out, |z, o| c.fast_jump(x, xi, z, o));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn diffusion_matrix_examples() {
        assert_eq!(diffusion_matrix(&Matrix::<f64>::identity(2)), Matrix::identity(2));
        assert_eq!(diffusion_matrix(&m(&[&[2.0, 0.0], &[0.0, 3.0]])), m(&[&[4.0, 0.0], &[0.0, 9.0]]));
        // Index-sum oracle written out term by term.
        let s = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let mut oracle = Matrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                oracle[(i, j)] = (0..2).map(|k| s[(i, k)] * s[(k, j)]).sum();
            }
        }
        assert_eq!(oracle, m(&[&[1.0, 2.0], &[0.0, 1.0]]));
        assert_eq!(diffusion_matrix(&s), oracle);
    }

    #[test]
    fn jump_matrix_examples() {
        assert_eq!(jump_matrix(&Matrix::<f64>::zeros(2, 2)), Matrix::zeros(2, 2));
        assert_eq!(jump_matrix(&m(&[&[2.0]])), m(&[&[4.0]]));
        assert_eq!(jump_matrix(&m(&[&[1.0, 0.0], &[0.0, 3.0]])), m(&[&[1.0, 0.0], &[0.0, 9.0]]));
    }

    #[test]
    fn scalar_model_diffusion_is_sigma_squared() {
        let model = benchmarks::linear::<f64>();
        let a0 = model.diffusion_matrix(&[0.3], 0, &[0.1]);
        let a1 = model.diffusion_matrix(&[0.3], 1, &[0.1]);
        assert_eq!(a0[(0, 0)], 1.0);
        assert_eq!(a1[(0, 0)], 4.0);
    }

    #[test]
    fn model_rejects_inconsistent_dimensions() {
        let base = benchmarks::linear::<f64>();
        assert!(base.clone().with_initial(vec![1.0, 2.0], vec![0.0], 0).is_err());
        assert!(base.clone().with_initial(vec![1.0], vec![0.0], 5).is_err());
        let three_states = benchmarks::linear_two_class::<f64>().switching().clone();
        assert!(base.with_switching(three_states).is_err());
    }

    #[test]
    fn unset_coefficients_are_zero() {
        let c = CoefficientSet::<f64>::new(2, 1, 1);
        let mut out = [7.0, 7.0];
        c.drift(&[1.0, 2.0], 0, &[3.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        let mut s = Matrix::from_rows(&[[5.0, 5.0], [5.0, 5.0]]).unwrap();
        c.diffusion(&[1.0, 2.0], 0, &[3.0], &mut s);
        assert_eq!(s, Matrix::zeros(2, 2));
    }
}
