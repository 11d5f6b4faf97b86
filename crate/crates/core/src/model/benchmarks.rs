//! Built-in benchmark models, selectable by name through [`by_name`].
//!
//! All benchmarks are scalar in both the slow and the fast component and use
//! symmetric (scalar) diffusion coefficients.

use super::{CoefficientSet, JumpMeasure, SlowFastModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::switching::{ClassPartition, GeneratorSchedule, TwoScaleGenerator};

/// Registry names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "zero",
    "drift_only",
    "diffusion_only",
    "ou",
    "exponential",
    "linear",
    "linear_jumps",
    "linear_two_class",
    "xi_free",
];

pub fn by_name<T: Real>(name: &str) -> Result<SlowFastModel<T>> {
    Ok(match name {
        "zero" => zero(),
        "drift_only" => drift_only(),
        "diffusion_only" => diffusion_only(),
        "ou" => ou(),
        "exponential" => exponential(),
        "linear" => linear(),
        "linear_jumps" => linear_jumps(),
        "linear_two_class" => linear_two_class(),
        "xi_free" => xi_free(),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown benchmark '{other}', expected one of {}",
                NAMES.join(", ")
            )))
        }
    })
}

fn single_regime<T: Real>(coef: CoefficientSet<T>, x0: f64) -> SlowFastModel<T> {
    SlowFastModel::new(
        coef,
        JumpMeasure::empty(),
        TwoScaleGenerator::trivial(1).expect("one-state chain"),
        vec![T::lit(x0)],
        vec![T::zero()],
        0,
    )
    .expect("valid benchmark")
}

fn constant_schedule<T: Real>(rows: &[&[f64]]) -> GeneratorSchedule<T> {
    GeneratorSchedule::constant(Matrix::from_f64_rows(rows).expect("rectangular")).expect("valid generator")
}

/// Two regimes with `Q~ = [[-1, 1], [2, -2]]`, `nu = (2/3, 1/3)`.
pub fn two_state_switching<T: Real>() -> TwoScaleGenerator<T> {
    TwoScaleGenerator::single_class(constant_schedule(&[&[-1.0, 1.0], &[2.0, -2.0]])).expect("valid")
}

/// Symmetric two-state chain `Q~ = [[-1, 1], [1, -1]]`, `nu = (1/2, 1/2)`.
pub fn symmetric_switching<T: Real>() -> TwoScaleGenerator<T> {
    TwoScaleGenerator::single_class(constant_schedule(&[&[-1.0, 1.0], &[1.0, -1.0]])).expect("valid")
}

/// Classes `{0, 1}` and `{2}`; the aggregated generator is
/// `[[-4/3, 4/3], [2, -2]]`.
pub fn two_class_switching<T: Real>() -> TwoScaleGenerator<T> {
    let fast = constant_schedule(&[&[-1.0, 1.0, 0.0], &[2.0, -2.0, 0.0], &[0.0, 0.0, 0.0]]);
    let slow = constant_schedule(&[&[-1.0, 0.0, 1.0], &[0.0, -2.0, 2.0], &[1.0, 1.0, -2.0]]);
    TwoScaleGenerator::new(fast, slow, ClassPartition::new(vec![2, 1]).expect("classes")).expect("valid")
}

/// Every coefficient zero; `x0 = 1.5`.
pub fn zero<T: Real>() -> SlowFastModel<T> {
    single_regime(CoefficientSet::new(1, 1, 1), 1.5)
}

/// `dx = dt`, fast component frozen; `x0 = 0`.
pub fn drift_only<T: Real>() -> SlowFastModel<T> {
    single_regime(CoefficientSet::new(1, 1, 1).with_drift(|_, _, _, o| o[0] = T::one()), 0.0)
}

/// `dx = dw`, fast component frozen; `x0 = 0`.
pub fn diffusion_only<T: Real>() -> SlowFastModel<T> {
    single_regime(CoefficientSet::new(1, 1, 1).with_diffusion(|_, _, _, s| s[(0, 0)] = T::one()), 0.0)
}

/// `dx = -x dt + dw`, fast component frozen; `x0 = 0`.
pub fn ou<T: Real>() -> SlowFastModel<T> {
    single_regime(
        CoefficientSet::new(1, 1, 1)
            .with_drift(|x: &[T], _, _, o| o[0] = -x[0])
            .with_diffusion(|_, _, _, s| s[(0, 0)] = T::one()),
        0.0,
    )
}

/// `dx = x dt`; `x0 = 1`.
pub fn exponential<T: Real>() -> SlowFastModel<T> {
    single_regime(CoefficientSet::new(1, 1, 1).with_drift(|x, _, _, o| o[0] = x[0]), 1.0)
}

fn linear_coefficients<T: Real>(c: &'static [f64], sigma: &'static [f64]) -> CoefficientSet<T> {
    CoefficientSet::new(1, 1, c.len())
        .with_drift(move |_, r, xi, o| o[0] = T::lit(c[r]) * xi[0])
        .with_diffusion(move |_, r, _, s| s[(0, 0)] = T::lit(sigma[r]))
        .with_fast_drift(|x, xi, o| o[0] = x[0] - xi[0])
        .with_fast_diffusion(|_, _, s| s[(0, 0)] = T::one())
}

/// Single-class linear benchmark.
///
/// `f = c_r xi` with `c = (3, 6)`, `sigma = (1, 2)`, fast OU
/// `kappa = -(xi - x)`, `varsigma = 1`, switching [`two_state_switching`].
/// The frozen fast law is `N(x, 1/2)`, so `f_bar = 4x` and `sigma_bar = sqrt 2`.
/// Initial data `x0 = 0`, `xi0 = 0`, `r0 = 0`.
pub fn linear<T: Real>() -> SlowFastModel<T> {
    SlowFastModel::new(
        linear_coefficients(&[3.0, 6.0], &[1.0, 2.0]),
        JumpMeasure::empty(),
        two_state_switching(),
        vec![T::zero()],
        vec![T::zero()],
        0,
    )
    .expect("valid benchmark")
}

/// [`linear`] with jumps `g = z`, `theta = z` driven by atoms `+-1/2` of
/// weight 1 each on the unit ball.
pub fn linear_jumps<T: Real>() -> SlowFastModel<T> {
    let jumps = JumpMeasure::scalar(T::one(), &[(T::lit(0.5), T::one()), (T::lit(-0.5), T::one())])
        .expect("valid measure");
    SlowFastModel::new(
        linear_coefficients(&[3.0, 6.0], &[1.0, 2.0])
            .with_jump(|_, _, _, z, o| o[0] = z[0])
            .with_fast_jump(|_, _, z, o| o[0] = z[0]),
        jumps,
        two_state_switching(),
        vec![T::zero()],
        vec![T::zero()],
        0,
    )
    .expect("valid benchmark")
}

/// Two-class linear benchmark on [`two_class_switching`] with
/// `c = (3, 6, -2)` and `sigma = (1, 2, 1)`: class 0 averages to
/// `f_bar = 4x`, `a_bar = 2`; class 1 to `f_bar = -2x`, `a_bar = 1`.
pub fn linear_two_class<T: Real>() -> SlowFastModel<T> {
    SlowFastModel::new(
        linear_coefficients(&[3.0, 6.0, -2.0], &[1.0, 2.0, 1.0]),
        JumpMeasure::empty(),
        two_class_switching(),
        vec![T::zero()],
        vec![T::zero()],
        0,
    )
    .expect("valid benchmark")
}

/// `dx = -x dt + dw` regardless of regime and fast state, with an active
/// fast OU and symmetric switching: the slow law does not depend on `eps`.
pub fn xi_free<T: Real>() -> SlowFastModel<T> {
    SlowFastModel::new(
        CoefficientSet::new(1, 1, 2)
            .with_drift(|x: &[T], _, _, o| o[0] = -x[0])
            .with_diffusion(|_, _, _, s| s[(0, 0)] = T::one())
            .with_fast_drift(|_, xi: &[T], o| o[0] = -xi[0])
            .with_fast_diffusion(|_, _, s| s[(0, 0)] = T::one()),
        JumpMeasure::empty(),
        symmetric_switching(),
        vec![T::lit(0.5)],
        vec![T::zero()],
        0,
    )
    .expect("valid benchmark")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_name_builds() {
        for name in NAMES {
            let m = by_name::<f64>(name).unwrap();
            assert_eq!(m.slow_dim(), 1);
            let m32 = by_name::<f32>(name).unwrap();
            assert_eq!(m32.coefficients().regimes(), m.coefficients().regimes());
        }
        assert!(by_name::<f64>("nope").is_err());
    }

    #[test]
    fn linear_coefficients_evaluate() {
        let m = linear::<f64>();
        let mut o = [0.0];
        m.coefficients().drift(&[0.0], 1, &[2.0], &mut o);
        assert_eq!(o, [12.0]);
        m.coefficients().fast_drift(&[2.0], &[0.5], &mut o);
        assert_eq!(o, [1.5]);
    }

    #[test]
    fn jump_benchmark_compensator_vanishes() {
        let m = linear_jumps::<f64>();
        let mut o = [1.0];
        m.slow_compensator(&[0.3], 0, &[0.1], &mut o);
        assert_eq!(o, [0.0]);
        assert_eq!(m.jumps().total_rate(), 2.0);
    }
}
