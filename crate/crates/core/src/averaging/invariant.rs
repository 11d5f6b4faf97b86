use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate_frozen_fast_with, PathGrid};
use crate::model::{validate_dissipativity, SamplingSpec, SlowFastModel};
use crate::real::{least_squares_line, Real, RunningMean};
use crate::rng::NoiseBundle;

/// Sampling of the frozen fast process for invariant-measure estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSettings<T> {
    /// Discarded initial time; `None` uses `10 / lambda*` from the sampled
    /// dissipativity constants.
    pub burn_in: Option<T>,
    /// Total simulated time per path; `None` uses five burn-in periods.
    pub horizon: Option<T>,
    /// Time between pooled samples of one path.
    pub sample_interval: T,
    pub dt: T,
    pub n_paths: usize,
    pub seed: u64,
    /// Initial fast state; `None` uses the model's `xi0`.
    pub xi0: Option<Vec<T>>,
}

impl<T: Real> InvariantSettings<T> {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            burn_in: None,
            horizon: None,
            sample_interval: T::one(),
            dt: T::lit(0.01),
            n_paths,
            seed,
            xi0: None,
        }
    }
}

/// Box half-width used when sampling dissipativity constants around `x`.
fn dissipativity_spec<T: Real>(model: &SlowFastModel<T>, x: &[T], seed: u64) -> SamplingSpec<T> {
    let scale = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let half = T::lit(5.0) * (T::one() + scale);
    SamplingSpec::cube(model.slow_dim(), model.fast_dim(), half, 256, seed)
}

/// Sampled `lambda* = 2 alpha1 - alpha2 - alpha3` at `(x, regime)`.
pub fn sampled_mixing_rate<T: Real>(model: &SlowFastModel<T>, x: &[T], regime: usize, seed: u64) -> Result<T> {
    Ok(validate_dissipativity(model, x, regime, &dissipativity_spec(model, x, seed))?.mixing_rate())
}

pub(crate) fn resolve_burn_in<T: Real>(
    model: &SlowFastModel<T>,
    x: &[T],
    regime: usize,
    burn_in: Option<T>,
    seed: u64,
) -> Result<T> {
    if let Some(b) = burn_in {
        if !(b >= T::zero()) {
            return Err(Error::InvalidInput(format!("burn-in must be nonnegative, got {b}")));
        }
        return Ok(b);
    }
    let rate = sampled_mixing_rate(model, x, regime, seed)?;
    if !(rate > T::zero()) {
        return Err(Error::InvalidInput(format!(
            "sampled mixing rate {rate} is not positive at x = {x:?}; set the burn-in explicitly"
        )));
    }
    Ok(T::lit(10.0) / rate)
}

fn steps_for<T: Real>(span: T, dt: T) -> Result<usize> {
    (span / dt)
        .ceil()
        .to_usize()
        .ok_or_else(|| Error::InvalidInput(format!("cannot cover {span} with step {dt}")))
}

/// Equally weighted cloud of fast states approximating `mu_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasureEstimate<T> {
    pub x: Vec<T>,
    pub regime: usize,
    pub fast_dim: usize,
    /// Row-major `len x fast_dim`.
    pub cloud: Vec<T>,
    pub burn_in: T,
    pub horizon: T,
    pub n_paths: usize,
    pub mean: Vec<T>,
    /// `E[xi xi^T]`, row-major.
    pub second_moment: Vec<T>,
}

impl<T: Real> InvariantMeasureEstimate<T> {
    fn from_cloud(x: Vec<T>, regime: usize, fast_dim: usize, cloud: Vec<T>, burn_in: T, horizon: T, n_paths: usize) -> Self {
        let n = cloud.len() / fast_dim.max(1);
        let mut mean = vec![RunningMean::new(); fast_dim];
        let mut second = vec![RunningMean::new(); fast_dim * fast_dim];
        for s in cloud.chunks(fast_dim.max(1)).take(n) {
            for i in 0..fast_dim {
                mean[i].push(s[i]);
                for j in 0..fast_dim {
                    second[i * fast_dim + j].push(s[i] * s[j]);
                }
            }
        }
        Self {
            x,
            regime,
            fast_dim,
            cloud,
            burn_in,
            horizon,
            n_paths,
            mean: mean.iter().map(RunningMean::mean).collect(),
            second_moment: second.iter().map(RunningMean::mean).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cloud.len() / self.fast_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[T] {
        &self.cloud[i * self.fast_dim..(i + 1) * self.fast_dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.cloud.chunks(self.fast_dim.max(1))
    }

    /// `E[xi xi^T] - E[xi] E[xi]^T`.
    pub fn covariance(&self) -> Vec<T> {
        let d = self.fast_dim;
        (0..d * d).map(|k| self.second_moment[k] - self.mean[k / d] * self.mean[k % d]).collect()
    }

    /// Sample variance (divisor `n - 1`) of coordinate `i`.
    pub fn variance(&self, i: usize) -> T {
        let n = self.len();
        let m = self.mean[i];
        let ss: T = self.samples().map(|s| (s[i] - m) * (s[i] - m)).sum();
        ss / T::from_usize_lossy(n.saturating_sub(1).max(1))
    }

    /// Cloud average of an observable.
    pub fn expect(&self, f: impl Fn(&[T]) -> T) -> T {
        let mut m = RunningMean::new();
        for s in self.samples() {
            m.push(f(s));
        }
        m.mean()
    }
}

/// Pools time samples of the frozen fast process at `(x, regime)` after the
/// burn-in, across `n_paths` independent paths.
pub fn estimate_invariant_measure<T: Real>(
    model: &SlowFastModel<T>,
    x: &[T],
    regime: usize,
    settings: &InvariantSettings<T>,
) -> Result<InvariantMeasureEstimate<T>> {
    if settings.n_paths == 0 {
        return Err(Error::InvalidInput("at least one path is required".into()));
    }
    let burn_in = resolve_burn_in(model, x, regime, settings.burn_in, settings.seed)?;
    let horizon = settings.horizon.unwrap_or(T::lit(5.0) * burn_in);
    let dt = settings.dt;
    let every = (settings.sample_interval / dt).round().to_usize().unwrap_or(0).max(1);
    let first = steps_for(burn_in, dt)?;
    let steps = steps_for(horizon, dt)?.max(first);
    if steps == 0 {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let grid = PathGrid::new(T::zero(), T::from_usize_lossy(steps) * dt, dt)?;
    let xi0 = settings.xi0.clone().unwrap_or_else(|| model.xi0().to_vec());
    let d = model.fast_dim();
    let per_path: Vec<Vec<T>> = (0..settings.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut out = Vec::new();
            simulate_frozen_fast_with(model, x, &xi0, &grid, &NoiseBundle::new(settings.seed, p), |k, _, xi| {
                if k >= first && (k - first) % every == 0 {
                    out.extend_from_slice(xi);
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let cloud: Vec<T> = per_path.concat();
    if cloud.is_empty() {
        return Err(Error::InvalidInput("horizon leaves no samples after burn-in".into()));
    }
    Ok(InvariantMeasureEstimate::from_cloud(x.to_vec(), regime, d, cloud, burn_in, horizon, settings.n_paths))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayStatus {
    Fitted,
    /// Fewer than two time points rise above the Monte Carlo noise floor.
    AllBelowNoiseFloor,
}

/// Settings of [`ergodicity_decay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicitySettings<T> {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: T,
    /// Burn-in before stationary samples are pooled; `None` uses `10 / lambda*`.
    pub burn_in: Option<T>,
    /// Stationary samples per path after the burn-in.
    pub stationary_samples: usize,
    pub sample_interval: T,
}

impl<T: Real> ErgodicitySettings<T> {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self { n_paths, seed, dt: T::lit(0.01), burn_in: None, stationary_samples: 5, sample_interval: T::lit(2.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport<T> {
    pub times: Vec<T>,
    /// `|E F(xi_t) - mu(F)|` per time point.
    pub deviations: Vec<T>,
    /// Three standard errors of each deviation.
    pub noise_floor: Vec<T>,
    pub stationary_mean: T,
    /// Fitted exponential rate; `None` when nothing rises above the floor.
    pub lambda_hat: Option<T>,
    /// Log of the fitted prefactor.
    pub log_prefactor: Option<T>,
    /// Sampled `2 alpha1 - alpha2 - alpha3` at the frozen point.
    pub lambda_star: Option<T>,
    pub points_used: usize,
    pub status: DecayStatus,
}

impl<T: Real> ErgodicityReport<T> {
    /// Checks `deviation(t) <= slack * C e^{-rate t} + floor(t)` at every time
    /// point with `C` the fitted prefactor. Returns `(C, holds)`.
    pub fn exponential_bound(&self, rate: T, slack: T) -> Option<(T, bool)> {
        let c = self.log_prefactor?.exp();
        let holds = self
            .times
            .iter()
            .zip(&self.deviations)
            .zip(&self.noise_floor)
            .all(|((&t, &d), &f)| d <= slack * c * (-rate * t).exp() + f);
        Some((c, holds))
    }
}

/// Measures the decay of `|E F(xi_t) - mu(F)|` for the frozen fast process
/// started at `eta`, and fits an exponential rate on the points above the
/// Monte Carlo noise floor. Every time in `times` must be a multiple of `dt`.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_decay<T: Real>(
    model: &SlowFastModel<T>,
    x: &[T],
    regime: usize,
    observable: &(dyn Fn(&[T]) -> T + Sync),
    eta: &[T],
    times: &[T],
    settings: &ErgodicitySettings<T>,
) -> Result<ErgodicityReport<T>> {
    if settings.n_paths < 2 {
        return Err(Error::InvalidInput("at least two paths are required".into()));
    }
    if eta.len() != model.fast_dim() {
        return Err(Error::DimensionMismatch("initial fast state".into()));
    }
    let lambda_star = sampled_mixing_rate(model, x, regime, settings.seed).ok();
    let burn_in = resolve_burn_in(model, x, regime, settings.burn_in, settings.seed)?;
    let dt = settings.dt;
    let every = (settings.sample_interval / dt).round().to_usize().unwrap_or(0).max(1);
    let first = steps_for(burn_in, dt)?;
    let last_time = times.iter().copied().fold(T::zero(), T::max);
    let stationary_end = first + every * settings.stationary_samples.saturating_sub(1);
    let steps = steps_for(last_time, dt)?.max(stationary_end).max(1);
    let grid = PathGrid::new(T::zero(), T::from_usize_lossy(steps) * dt, dt)?;
    let nodes: Vec<usize> = times
        .iter()
        .map(|&t| grid.node_at(t).ok_or_else(|| Error::InvalidInput(format!("time {t} is not a multiple of dt"))))
        .collect::<Result<_>>()?;
    let m = settings.stationary_samples;

    let per_path: Vec<(Vec<T>, Vec<T>)> = (0..settings.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut at_times = vec![T::zero(); nodes.len()];
            let mut stationary = Vec::with_capacity(m);
            simulate_frozen_fast_with(model, x, eta, &grid, &NoiseBundle::new(settings.seed, p), |k, _, xi| {
                let needed = nodes.contains(&k)
                    || (m > 0 && k >= first && (k - first) % every == 0 && stationary.len() < m);
                if !needed {
                    return;
                }
                let v = observable(xi);
                for (slot, &n) in at_times.iter_mut().zip(&nodes) {
                    if n == k {
                        *slot = v;
                    }
                }
                if m > 0 && k >= first && (k - first) % every == 0 && stationary.len() < m {
                    stationary.push(v);
                }
            })?;
            Ok((at_times, stationary))
        })
        .collect::<Result<_>>()?;

    let n = T::from_usize_lossy(settings.n_paths);
    let mut mu = RunningMean::new();
    let mut mu_sq = RunningMean::new();
    for (_, s) in &per_path {
        for &v in s {
            mu.push(v);
            mu_sq.push(v * v);
        }
    }
    let n_mu = T::from_usize_lossy(mu.count().max(1));
    let var_mu = (mu_sq.mean() - mu.mean() * mu.mean()).max(T::zero());

    let mut deviations = Vec::with_capacity(nodes.len());
    let mut floors = Vec::with_capacity(nodes.len());
    for j in 0..nodes.len() {
        let mut mean = RunningMean::new();
        let mut sq = RunningMean::new();
        for (a, _) in &per_path {
            mean.push(a[j]);
            sq.push(a[j] * a[j]);
        }
        let var = (sq.mean() - mean.mean() * mean.mean()).max(T::zero());
        deviations.push((mean.mean() - mu.mean()).abs());
        floors.push(T::lit(3.0) * (var / n + var_mu / n_mu).sqrt());
    }

    let (ts, logs): (Vec<T>, Vec<T>) = times
        .iter()
        .zip(&deviations)
        .zip(&floors)
        .filter(|((_, &d), &f)| d > f && d > T::zero())
        .map(|((&t, &d), _)| (t, d.ln()))
        .unzip();
    let fit = least_squares_line(&ts, &logs);
    let (lambda_hat, log_prefactor, status) = match fit {
        Some((slope, intercept)) => (Some(-slope), Some(intercept), DecayStatus::Fitted),
        None => (None, None, DecayStatus::AllBelowNoiseFloor),
    };
    Ok(ErgodicityReport {
        times: times.to_vec(),
        deviations,
        noise_floor: floors,
        stationary_mean: mu.mean(),
        lambda_hat,
        log_prefactor,
        lambda_star,
        points_used: ts.len(),
        status,
    })
}
