use serde::{Deserialize, Serialize};

use super::invariant::{estimate_invariant_measure, InvariantMeasureEstimate, InvariantSettings};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::SlowFastModel;
use crate::real::{Real, RunningMean};
use crate::switching::QuasiStationaryDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSelector {
    /// `f`.
    Drift,
    /// `a = sigma sigma`.
    Diffusion,
    /// `int G v(dz) = sum_i w_i G(z_i)`.
    JumpIntegral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AveragedValue<T> {
    Vector(Vec<T>),
    Matrix(Matrix<T>),
}

impl<T: Real> AveragedValue<T> {
    pub fn as_slice(&self) -> &[T] {
        match self {
            AveragedValue::Vector(v) => v,
            AveragedValue::Matrix(m) => m.as_slice(),
        }
    }
}

/// `(state, nu)` pairs of one class at time `t`.
pub fn class_weights<T: Real>(qsd: &QuasiStationaryDistribution<T>, class: usize, t: T) -> Result<Vec<(usize, T)>> {
    let p = qsd.partition();
    if class >= p.n_classes() {
        return Err(Error::InvalidInput(format!("class {class} out of range")));
    }
    let nu = qsd.class_vector(class, t)?;
    Ok(p.range(class).zip(nu.iter().copied()).collect())
}

/// Weighted mean computed incrementally: identical inputs reproduce the
/// input exactly, and the result never leaves the inputs' convex hull.
pub(crate) struct WeightedMean<T> {
    total: T,
    value: Vec<T>,
}

impl<T: Real> WeightedMean<T> {
    pub fn new(len: usize) -> Self {
        Self { total: T::zero(), value: vec![T::zero(); len] }
    }

    pub fn push(&mut self, w: T, v: &[T]) {
        if !(w > T::zero()) {
            return;
        }
        if self.total == T::zero() {
            self.value.copy_from_slice(v);
            self.total = w;
            return;
        }
        self.total += w;
        let r = w / self.total;
        for (a, &b) in self.value.iter_mut().zip(v) {
            *a += r * (b - *a);
        }
    }

    pub fn into_inner(self) -> Vec<T> {
        self.value
    }
}

/// Value of the selected coefficient at `(x, regime, xi)`, flattened.
fn evaluate<T: Real>(model: &SlowFastModel<T>, selector: CoefficientSelector, x: &[T], regime: usize, xi: &[T], out: &mut [T]) {
    let d = model.slow_dim();
    match selector {
        CoefficientSelector::Drift => model.coefficients().drift(x, regime, xi, out),
        CoefficientSelector::Diffusion => out.copy_from_slice(model.diffusion_matrix(x, regime, xi).as_slice()),
        CoefficientSelector::JumpIntegral => {
            out.fill(T::zero());
            let mut g = vec![T::zero(); d];
            for (z, w) in model.jumps().iter() {
                model.coefficients().jump(x, regime, xi, z, &mut g);
                // G = diag(g_i^2).
                for i in 0..d {
                    out[i * d + i] += w * g[i] * g[i];
                }
            }
        }
    }
}

/// Per-regime cloud mean of the selected coefficient, combined with the
/// weights `(regime, nu)`.
pub fn average_over_measure<T: Real>(
    model: &SlowFastModel<T>,
    selector: CoefficientSelector,
    x: &[T],
    weights: &[(usize, T)],
    measure: &InvariantMeasureEstimate<T>,
) -> Result<AveragedValue<T>> {
    let d = model.slow_dim();
    let len = match selector {
        CoefficientSelector::Drift => d,
        _ => d * d,
    };
    if weights.iter().any(|&(r, w)| r >= model.coefficients().regimes() || !(w >= T::zero())) {
        return Err(Error::InvalidInput("regime weights must be nonnegative and in range".into()));
    }
    let mut combined = WeightedMean::new(len);
    let mut buf = vec![T::zero(); len];
    for &(regime, w) in weights {
        let mut means = vec![RunningMean::new(); len];
        for xi in measure.samples() {
            evaluate(model, selector, x, regime, xi, &mut buf);
            for (m, &v) in means.iter_mut().zip(&buf) {
                m.push(v);
            }
        }
        let regime_mean: Vec<T> = means.iter().map(RunningMean::mean).collect();
        combined.push(w, &regime_mean);
    }
    let v = combined.into_inner();
    Ok(match selector {
        CoefficientSelector::Drift => AveragedValue::Vector(v),
        _ => AveragedValue::Matrix(Matrix::from_row_major(d, d, v).expect("square")),
    })
}

/// `sum_gamma nu_gamma int coef(x, gamma, xi) mu_x(dxi)` with `mu_x`
/// estimated from the frozen fast process. The fast coefficients carry no
/// regime, so one estimate of `mu_x` serves every regime.
pub fn average_coefficient<T: Real>(
    model: &SlowFastModel<T>,
    selector: CoefficientSelector,
    x: &[T],
    weights: &[(usize, T)],
    settings: &InvariantSettings<T>,
) -> Result<AveragedValue<T>> {
    let regime = weights.first().map_or(0, |w| w.0);
    let measure = estimate_invariant_measure(model, x, regime, settings)?;
    average_over_measure(model, selector, x, weights, &measure)
}

/// Symmetric PSD square root `s` with `s s = a`, via the spectral
/// decomposition. Eigenvalues down to `-1e-6` (relative to the matrix scale)
/// are clamped to zero.
pub fn psd_root<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("square root of a non-square matrix".into()));
    }
    let scale = T::one().max(a.max_abs());
    if !a.is_symmetric(T::lit(1e-8) * scale) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    let n = a.rows();
    let floor = -T::lit(1e-6) * scale;
    if n == 1 {
        let v = a[(0, 0)];
        if v < floor {
            return Err(Error::NotPsd { eigenvalue: v.as_f64() });
        }
        return Ok(Matrix::from_diagonal(&[v.max(T::zero()).sqrt()]));
    }
    let (values, vectors) = a.symmetric_eigen();
    if let Some(&worst) = values.iter().find(|&&v| v < floor) {
        return Err(Error::NotPsd { eigenvalue: worst.as_f64() });
    }
    let roots: Vec<T> = values.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: T = (0..n).map(|k| vectors[(i, k)] * roots[k] * vectors[(j, k)]).sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}
