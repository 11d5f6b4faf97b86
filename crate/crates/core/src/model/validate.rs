//! Sampling-based falsifiers for the Lipschitz and dissipativity
//! hypotheses on the coefficients.
//!
//! Both quantify over all states, so a finite sample can only produce a
//! lower estimate of the true constants. Pairs are drawn sequentially from a
//! single seeded stream: a larger sample extends a smaller one, and the
//! reported maxima never decrease as the sample grows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SlowFastModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::{dist_sq, dot, norm_sq, Real};
use crate::rng::{NoiseBundle, StreamLabel};

/// A sampled `(x, xi)` pair.
pub type StatePoint<T> = (Vec<T>, Vec<T>);

/// Box to sample from, number of pairs and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec<T> {
    pub x_lo: Vec<T>,
    pub x_hi: Vec<T>,
    pub xi_lo: Vec<T>,
    pub xi_hi: Vec<T>,
    pub pairs: usize,
    pub seed: u64,
}

impl<T: Real> SamplingSpec<T> {
    /// Cube `[-half, half]` in every slow and fast coordinate.
    pub fn cube(slow_dim: usize, fast_dim: usize, half: T, pairs: usize, seed: u64) -> Self {
        Self {
            x_lo: vec![-half; slow_dim],
            x_hi: vec![half; slow_dim],
            xi_lo: vec![-half; fast_dim],
            xi_hi: vec![half; fast_dim],
            pairs,
            seed,
        }
    }

    fn check(&self, slow_dim: usize, fast_dim: usize) -> Result<()> {
        if self.x_lo.len() != slow_dim || self.x_hi.len() != slow_dim {
            return Err(Error::DimensionMismatch("slow sampling box".into()));
        }
        if self.xi_lo.len() != fast_dim || self.xi_hi.len() != fast_dim {
            return Err(Error::DimensionMismatch("fast sampling box".into()));
        }
        let ordered = |lo: &[T], hi: &[T]| lo.iter().zip(hi).all(|(a, b)| a <= b && a.is_finite() && b.is_finite());
        if !ordered(&self.x_lo, &self.x_hi) || !ordered(&self.xi_lo, &self.xi_hi) {
            return Err(Error::InvalidInput("sampling box bounds must be finite and ordered".into()));
        }
        Ok(())
    }
}

fn draw_point<T: Real, R: Rng>(lo: &[T], hi: &[T], rng: &mut R) -> Vec<T> {
    lo.iter().zip(hi).map(|(&a, &b)| a + (b - a) * T::unit_uniform(rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeLipschitz<T> {
    pub regime: usize,
    /// Largest sampled `(|df|^2 v |dsigma|^2 v sum w |dg|^2) / (|dx|^2 + |dxi|^2)`.
    pub max_ratio: T,
    /// Pair `((x1, xi1), (x2, xi2))` attaining `max_ratio`.
    pub worst_pair: Option<(StatePoint<T>, StatePoint<T>)>,
    /// Pairs whose ratio exceeded the declared constant.
    pub exceedances: usize,
    pub declared: Option<T>,
    /// `None` when no constant was declared.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport<T> {
    pub regimes: Vec<RegimeLipschitz<T>>,
    pub pairs: usize,
    pub degenerate_skipped: usize,
}

/// Estimates the squared Lipschitz ratio of the slow coefficients per regime
/// and flags pairs exceeding `declared[regime]`.
pub fn validate_lipschitz<T: Real>(
    model: &SlowFastModel<T>,
    spec: &SamplingSpec<T>,
    declared: Option<&[T]>,
) -> Result<LipschitzReport<T>> {
    let (dx, dxi) = (model.slow_dim(), model.fast_dim());
    spec.check(dx, dxi)?;
    let regimes = model.coefficients().regimes();
    if let Some(d) = declared {
        if d.len() != regimes {
            return Err(Error::DimensionMismatch("one declared constant per regime".into()));
        }
    }
    let c = model.coefficients();
    let jumps = model.jumps();
    let mut f1 = vec![T::zero(); dx];
    let mut f2 = vec![T::zero(); dx];
    let mut s1 = Matrix::zeros(dx, dx);
    let mut s2 = Matrix::zeros(dx, dx);
    let mut degenerate = 0;
    let mut out = Vec::with_capacity(regimes);
    for regime in 0..regimes {
        let mut rng = NoiseBundle::new(spec.seed, regime as u64).stream(StreamLabel::Auxiliary(0));
        let mut best = RegimeLipschitz {
            regime,
            max_ratio: T::zero(),
            worst_pair: None,
            exceedances: 0,
            declared: declared.map(|d| d[regime]),
            pass: None,
        };
        for _ in 0..spec.pairs {
            let x1 = draw_point(&spec.x_lo, &spec.x_hi, &mut rng);
            let xi1 = draw_point(&spec.xi_lo, &spec.xi_hi, &mut rng);
            let x2 = draw_point(&spec.x_lo, &spec.x_hi, &mut rng);
            let xi2 = draw_point(&spec.xi_lo, &spec.xi_hi, &mut rng);
            let denom = dist_sq(&x1, &x2) + dist_sq(&xi1, &xi2);
            if !(denom > T::zero()) {
                if regime == 0 {
                    degenerate += 1;
                }
                continue;
            }
            c.drift(&x1, regime, &xi1, &mut f1);
            c.drift(&x2, regime, &xi2, &mut f2);
            let df = dist_sq(&f1, &f2);
            c.diffusion(&x1, regime, &xi1, &mut s1);
            c.diffusion(&x2, regime, &xi2, &mut s2);
            let ds = dist_sq(s1.as_slice(), s2.as_slice());
            let mut dg = T::zero();
            for (z, w) in jumps.iter() {
                c.jump(&x1, regime, &xi1, z, &mut f1);
                c.jump(&x2, regime, &xi2, z, &mut f2);
                dg += w * dist_sq(&f1, &f2);
            }
            let ratio = df.max(ds).max(dg) / denom;
            if let Some(limit) = best.declared {
                if ratio > limit {
                    best.exceedances += 1;
                }
            }
            if ratio > best.max_ratio || best.worst_pair.is_none() {
                best.max_ratio = ratio;
                best.worst_pair = Some(((x1, xi1), (x2, xi2)));
            }
        }
        best.pass = best.declared.map(|_| best.exceedances == 0);
        out.push(best);
    }
    Ok(LipschitzReport { regimes: out, pairs: spec.pairs, degenerate_skipped: degenerate })
}

/// Multiplier fixing the free constant `alpha` of the growth bounds relative
/// to the size of the fast coefficients at `xi = 0`. Larger values move the
/// primed constants towards their Lipschitz counterparts.
pub const GROWTH_SLACK: f64 = 10.0;

/// Sampled dissipativity constants at a frozen slow state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipativityConstants<T> {
    pub x_frozen: Vec<T>,
    pub regime: usize,
    /// Largest `a1` with `<dxi, dkappa> <= -a1 |dxi|^2` on the sample.
    pub alpha1: T,
    /// Largest `|dkappa|^2 v |dvarsigma|^2` ratio.
    pub alpha2: T,
    /// Largest `sum w |dtheta|^2` ratio.
    pub alpha3: T,
    /// Constant `alpha` of the growth bounds: [`GROWTH_SLACK`] times the largest of
    /// `|kappa(x, 0)|^2`, `|varsigma(x, 0)|^2`, `sum w |theta(x, 0, z)|^2`
    /// over `1 + |x|^2`.
    pub alpha: T,
    pub alpha1_growth: T,
    pub alpha2_growth: T,
    pub alpha3_growth: T,
    /// `2 alpha1 - alpha2 - alpha3`; also the mixing rate `lambda*`.
    pub margin: T,
    pub growth_margin: T,
    pub pass: bool,
}

impl<T: Real> DissipativityConstants<T> {
    /// Exponential mixing rate `lambda* = 2 alpha1 - alpha2 - alpha3`.
    pub fn mixing_rate(&self) -> T {
        self.margin
    }
}

/// Estimates the dissipativity constants of the fast coefficients with the
/// slow state frozen at `x_frozen`. Only the fast box of `spec` is used.
pub fn validate_dissipativity<T: Real>(
    model: &SlowFastModel<T>,
    x_frozen: &[T],
    regime: usize,
    spec: &SamplingSpec<T>,
) -> Result<DissipativityConstants<T>> {
    let dxi = model.fast_dim();
    if x_frozen.len() != model.slow_dim() {
        return Err(Error::DimensionMismatch("frozen slow state".into()));
    }
    if spec.xi_lo.len() != dxi || spec.xi_hi.len() != dxi {
        return Err(Error::DimensionMismatch("fast sampling box".into()));
    }
    if spec.pairs == 0 {
        return Err(Error::InvalidInput("at least one sample pair is required".into()));
    }
    let c = model.coefficients();
    let jumps = model.jumps();
    let x = x_frozen;
    let mut k1 = vec![T::zero(); dxi];
    let mut k2 = vec![T::zero(); dxi];
    let mut s1 = Matrix::zeros(dxi, dxi);
    let mut s2 = Matrix::zeros(dxi, dxi);

    let origin = vec![T::zero(); dxi];
    let x_weight = T::one() + norm_sq(x);
    c.fast_drift(x, &origin, &mut k1);
    c.fast_diffusion(x, &origin, &mut s1);
    let mut theta0 = T::zero();
    for (z, w) in jumps.iter() {
        c.fast_jump(x, &origin, z, &mut k2);
        theta0 += w * norm_sq(&k2);
    }
    let alpha = T::lit(GROWTH_SLACK) * norm_sq(&k1).max(norm_sq(s1.as_slice())).max(theta0) / x_weight;
    let slack = alpha * x_weight;

    let mut rng = NoiseBundle::new(spec.seed, regime as u64).stream(StreamLabel::Auxiliary(1));
    let mut alpha1 = T::infinity();
    let mut alpha2 = T::zero();
    let mut alpha3 = T::zero();
    let mut alpha1_growth = T::infinity();
    let mut alpha2_growth = T::zero();
    let mut alpha3_growth = T::zero();
    for _ in 0..spec.pairs {
        let xi1 = draw_point(&spec.xi_lo, &spec.xi_hi, &mut rng);
        let xi2 = draw_point(&spec.xi_lo, &spec.xi_hi, &mut rng);
        c.fast_drift(x, &xi1, &mut k1);
        c.fast_drift(x, &xi2, &mut k2);
        c.fast_diffusion(x, &xi1, &mut s1);
        c.fast_diffusion(x, &xi2, &mut s2);
        let mut theta_diff = T::zero();
        let mut theta_abs = T::zero();
        let mut t1 = vec![T::zero(); dxi];
        let mut t2 = vec![T::zero(); dxi];
        for (z, w) in jumps.iter() {
            c.fast_jump(x, &xi1, z, &mut t1);
            c.fast_jump(x, &xi2, z, &mut t2);
            theta_diff += w * dist_sq(&t1, &t2);
            theta_abs += w * norm_sq(&t1);
        }

        let d2 = dist_sq(&xi1, &xi2);
        if d2 > T::zero() {
            let dxi_v: Vec<T> = xi1.iter().zip(&xi2).map(|(&a, &b)| a - b).collect();
            let dk: Vec<T> = k1.iter().zip(&k2).map(|(&a, &b)| a - b).collect();
            alpha1 = alpha1.min(-dot(&dxi_v, &dk) / d2);
            alpha2 = alpha2.max(norm_sq(&dk).max(dist_sq(s1.as_slice(), s2.as_slice())) / d2);
            alpha3 = alpha3.max(theta_diff / d2);
        }

        let r2 = norm_sq(&xi1);
        if r2 > T::zero() {
            alpha1_growth = alpha1_growth.min((slack - dot(&xi1, &k1)) / r2);
            alpha2_growth =
                alpha2_growth.max((norm_sq(&k1).max(norm_sq(s1.as_slice())) - slack) / r2);
            alpha3_growth = alpha3_growth.max((theta_abs - slack) / r2);
        }
    }
    if !alpha1.is_finite() {
        alpha1 = T::zero();
    }
    if !alpha1_growth.is_finite() {
        alpha1_growth = T::zero();
    }
    let margin = T::lit(2.0) * alpha1 - alpha2 - alpha3;
    let growth_margin = T::lit(2.0) * alpha1_growth - alpha2_growth - alpha3_growth;
    Ok(DissipativityConstants {
        x_frozen: x.to_vec(),
        regime,
        alpha1,
        alpha2,
        alpha3,
        alpha,
        alpha1_growth,
        alpha2_growth,
        alpha3_growth,
        margin,
        growth_margin,
        pass: margin > T::zero() && growth_margin > T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{benchmarks, CoefficientSet, JumpMeasure};
    use crate::switching::{GeneratorSchedule, TwoScaleGenerator};

    fn two_regime() -> TwoScaleGenerator<f64> {
        TwoScaleGenerator::single_class(
            GeneratorSchedule::constant(Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap()).unwrap(),
        )
        .unwrap()
    }

    fn fast_only(coef: CoefficientSet<f64>, jumps: JumpMeasure<f64>) -> SlowFastModel<f64> {
        SlowFastModel::new(coef, jumps, TwoScaleGenerator::trivial(1).unwrap(), vec![0.0], vec![0.0], 0).unwrap()
    }

    #[test]
    fn linear_drift_ratio_respects_cauchy_schwarz_bound() {
        let coef = CoefficientSet::new(1, 1, 2).with_drift(|x, r, xi, o| {
            let c = [1.0, 2.0][r];
            o[0] = c * (x[0] + xi[0]);
        });
        let model = SlowFastModel::new(coef, JumpMeasure::empty(), two_regime(), vec![0.0], vec![0.0], 0).unwrap();
        let spec = SamplingSpec::cube(1, 1, 3.0, 2000, 11);
        let rep = validate_lipschitz(&model, &spec, Some(&[2.0, 8.0])).unwrap();
        for (r, c) in [(0usize, 1.0f64), (1, 2.0)] {
            assert!(rep.regimes[r].max_ratio <= 2.0 * c * c + 1e-9);
            assert!(rep.regimes[r].max_ratio > 0.0);
            assert_eq!(rep.regimes[r].pass, Some(true));
        }
    }

    #[test]
    fn constant_coefficients_have_zero_ratio() {
        let coef = CoefficientSet::new(1, 1, 1)
            .with_drift(|_, _, _, o| o[0] = 3.0)
            .with_diffusion(|_, _, _, s| s[(0, 0)] = 0.5);
        let model = SlowFastModel::new(
            coef,
            JumpMeasure::empty(),
            TwoScaleGenerator::trivial(1).unwrap(),
            vec![0.0],
            vec![0.0],
            0,
        )
        .unwrap();
        let rep = validate_lipschitz(&model, &SamplingSpec::cube(1, 1, 1.0, 500, 1), None).unwrap();
        assert_eq!(rep.regimes[0].max_ratio, 0.0);
        assert_eq!(rep.regimes[0].pass, None);
    }

    #[test]
    fn square_root_drift_is_flagged_and_ratio_grows_with_samples() {
        let coef = CoefficientSet::new(1, 1, 1).with_drift(|x: &[f64], _, _, o| o[0] = x[0].abs().sqrt());
        let model = SlowFastModel::new(
            coef,
            JumpMeasure::empty(),
            TwoScaleGenerator::trivial(1).unwrap(),
            vec![0.0],
            vec![0.0],
            0,
        )
        .unwrap();
        let mut spec = SamplingSpec::cube(1, 1, 1.0, 100, 5);
        spec.xi_lo = vec![0.0];
        spec.xi_hi = vec![0.0];
        let mut last = 0.0;
        for pairs in [100, 1_000, 10_000, 100_000] {
            spec.pairs = pairs;
            let rep = validate_lipschitz(&model, &spec, Some(&[5.0])).unwrap();
            let r = rep.regimes[0].max_ratio;
            assert!(r >= last);
            last = r;
            // Same-sign pair oracle: ratio = 1/(sqrt|x1| + sqrt|x2|)^2 >= 1/(4 max|x|).
            let ((x1, _), (x2, _)): (StatePoint<f64>, StatePoint<f64>) = rep.regimes[0].worst_pair.clone().unwrap();
            if x1[0] * x2[0] > 0.0 {
                assert!(r >= 1.0 / (4.0 * x1[0].abs().max(x2[0].abs())) - 1e-9);
            }
        }
        let rep = validate_lipschitz(&model, &spec, Some(&[5.0])).unwrap();
        assert_eq!(rep.regimes[0].pass, Some(false));
        assert!(rep.regimes[0].exceedances > 0);
        assert!(last > 50.0);
    }

    #[test]
    fn ou_fast_dynamics_are_dissipative() {
        let coef = CoefficientSet::new(1, 1, 1)
            .with_fast_drift(|_, xi: &[f64], o| o[0] = -xi[0])
            .with_fast_diffusion(|_, _, s| s[(0, 0)] = 1.0);
        let model = fast_only(coef, JumpMeasure::empty());
        let d = validate_dissipativity(&model, &[0.0], 0, &SamplingSpec::cube(1, 1, 5.0, 1000, 3)).unwrap();
        assert!((d.alpha1 - 1.0).abs() < 1e-12);
        assert!((d.alpha2 - 1.0).abs() < 1e-12);
        assert_eq!(d.alpha3, 0.0);
        assert!((d.margin - 1.0).abs() < 1e-12);
        assert!(d.pass);
    }

    #[test]
    fn expanding_fast_drift_fails() {
        let coef = CoefficientSet::new(1, 1, 1).with_fast_drift(|_, xi, o| o[0] = xi[0]);
        let model = fast_only(coef, JumpMeasure::empty());
        let d = validate_dissipativity(&model, &[0.0], 0, &SamplingSpec::cube(1, 1, 5.0, 1000, 3)).unwrap();
        assert!(d.alpha1 <= -1.0 + 1e-12);
        assert!(!d.pass);
    }

    #[test]
    fn multiplicative_fast_jumps_give_alpha3() {
        let coef = CoefficientSet::new(1, 1, 1)
            .with_fast_drift(|_, xi: &[f64], o| o[0] = -xi[0])
            .with_fast_jump(|_, xi, z, o| o[0] = z[0] * xi[0]);
        let jumps = JumpMeasure::scalar(1.5, &[(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        let model = fast_only(coef, jumps);
        let d = validate_dissipativity(&model, &[0.0], 0, &SamplingSpec::cube(1, 1, 5.0, 500, 3)).unwrap();
        assert!((d.alpha3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_benchmark_has_unit_mixing_rate() {
        let model = benchmarks::linear::<f64>();
        let d = validate_dissipativity(&model, &[2.0], 0, &SamplingSpec::cube(1, 1, 5.0, 500, 3)).unwrap();
        assert!((d.mixing_rate() - 1.0).abs() < 1e-9);
        assert!(d.pass, "{d:?}");
    }

    #[test]
    fn box_dimension_is_checked() {
        let model = benchmarks::linear::<f64>();
        assert!(validate_lipschitz(&model, &SamplingSpec::cube(2, 1, 1.0, 10, 0), None).is_err());
    }
}
