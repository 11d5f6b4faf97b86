use rand_chacha::ChaCha8Rng;

use crate::model::JumpMeasure;
use crate::real::Real;
use crate::rng::{NoiseBundle, StreamLabel};

/// Random inputs of one Euler step.
#[derive(Debug, Clone, Default)]
pub(crate) struct StepDraw<T> {
    pub slow_z: Vec<T>,
    pub fast_z: Vec<T>,
    pub slow_marks: Vec<usize>,
    pub fast_marks: Vec<usize>,
}

struct JumpSource<T> {
    rng: ChaCha8Rng,
    mean: T,
}

/// Per-step sampler over the labelled streams of a [`NoiseBundle`]. Streams
/// of inactive noise sources are never touched, and each source reads only
/// its own stream, so the draws of one source do not depend on the others.
pub(crate) struct StepNoise<T> {
    slow: Option<(ChaCha8Rng, usize)>,
    fast: Option<(ChaCha8Rng, usize)>,
    slow_jumps: Option<JumpSource<T>>,
    fast_jumps: Option<JumpSource<T>>,
}

/// Rates of the active noise sources.
pub(crate) struct NoiseShape<T> {
    pub slow_gaussian: usize,
    pub fast_gaussian: usize,
    /// Expected slow jump count per step, `lambda dt`.
    pub slow_jump_mean: Option<T>,
    /// Expected fast jump count per step, `lambda dt / eps`.
    pub fast_jump_mean: Option<T>,
}

impl<T: Real> StepNoise<T> {
    pub fn new(bundle: &NoiseBundle, shape: &NoiseShape<T>) -> Self {
        let gaussian = |label, dim: usize| (dim > 0).then(|| (bundle.stream(label), dim));
        let jumps = |label, mean: Option<T>| {
            mean.filter(|m| *m > T::zero()).map(|mean| JumpSource { rng: bundle.stream(label), mean })
        };
        Self {
            slow: gaussian(StreamLabel::SlowBrownian, shape.slow_gaussian),
            fast: gaussian(StreamLabel::FastBrownian, shape.fast_gaussian),
            slow_jumps: jumps(StreamLabel::SlowJumps, shape.slow_jump_mean),
            fast_jumps: jumps(StreamLabel::FastJumps, shape.fast_jump_mean),
        }
    }

    pub fn draw(&mut self, measure: &JumpMeasure<T>, out: &mut StepDraw<T>) {
        fill_gaussian(&mut self.slow, &mut out.slow_z);
        fill_gaussian(&mut self.fast, &mut out.fast_z);
        fill_marks(&mut self.slow_jumps, measure, &mut out.slow_marks);
        fill_marks(&mut self.fast_jumps, measure, &mut out.fast_marks);
    }
}

fn fill_gaussian<T: Real>(src: &mut Option<(ChaCha8Rng, usize)>, out: &mut Vec<T>) {
    out.clear();
    if let Some((rng, dim)) = src {
        out.extend((0..*dim).map(|_| T::standard_normal(rng)));
    }
}

fn fill_marks<T: Real>(src: &mut Option<JumpSource<T>>, measure: &JumpMeasure<T>, out: &mut Vec<usize>) {
    out.clear();
    if let Some(JumpSource { rng, mean }) = src {
        let count = poisson_inverse(T::unit_uniform(rng), *mean);
        out.extend((0..count).map(|_| measure.pick(T::unit_uniform(rng))));
    }
}

/// Poisson(`mean`) quantile of a uniform draw, by sequential search of the CDF.
pub(crate) fn poisson_inverse<T: Real>(u: T, mean: T) -> usize {
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0usize;
    // Stop once further terms cannot move the CDF.
    while u >= cdf && k < 10_000 {
        k += 1;
        p = p * mean / T::from_usize_lossy(k);
        if p <= T::zero() && T::from_usize_lossy(k) > mean {
            break;
        }
        cdf += p;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_quantiles() {
        assert_eq!(poisson_inverse(0.0, 0.5), 0);
        assert_eq!(poisson_inverse(0.5, 0.5), 0);
        // P(0) = e^-0.5 = 0.6065, P(<=1) = 0.9098.
        assert_eq!(poisson_inverse(0.7, 0.5), 1);
        assert_eq!(poisson_inverse(0.95, 0.5), 2);
        assert_eq!(poisson_inverse(0.999_999_999, 1e-3), 2);
    }

    #[test]
    fn poisson_mean_matches() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let total: usize = (0..n).map(|_| poisson_inverse(f64::unit_uniform(&mut rng), 2.0)).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "{mean}");
    }
}
