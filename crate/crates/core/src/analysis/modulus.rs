use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate_coupled_with, PathGrid};
use crate::model::SlowFastModel;
use crate::real::{dist_sq, least_squares_line, Real, RunningMean};
use crate::rng::NoiseBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport<T> {
    pub eps: T,
    pub anchor: T,
    pub taus: Vec<T>,
    /// `E|x(anchor + tau) - x(anchor)|^2` per `tau`.
    pub moments: Vec<T>,
    pub std_errors: Vec<T>,
    /// Log-log slope over the positive moments; `None` with fewer than two.
    pub slope: Option<T>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Second moments of slow increments after `anchor`. Every `anchor` and
/// `anchor + tau` must be a grid node for step `dt` starting at 0.
pub fn modulus_check<T: Real>(
    model: &SlowFastModel<T>,
    eps: T,
    dt: T,
    anchor: T,
    taus: &[T],
    n_paths: usize,
    seed: u64,
) -> Result<ModulusReport<T>> {
    if n_paths < 2 {
        return Err(Error::InvalidInput("at least two paths are required".into()));
    }
    if taus.is_empty() || taus.iter().any(|&t| !(t > T::zero())) || !(anchor >= T::zero()) {
        return Err(Error::InvalidInput("lags must be positive and the anchor nonnegative".into()));
    }
    let horizon = anchor + taus.iter().copied().fold(T::zero(), T::max);
    let grid = PathGrid::new(T::zero(), horizon, dt)?;
    let node = |t: T| grid.node_at(t).ok_or_else(|| Error::InvalidInput(format!("time {t} is not a grid node")));
    let a = node(anchor)?;
    let targets: Vec<usize> = taus.iter().map(|&tau| node(anchor + tau)).collect::<Result<_>>()?;
    let per_path: Vec<Vec<T>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut base = Vec::new();
            let mut out = vec![T::zero(); targets.len()];
            simulate_coupled_with(model, eps, &grid, &NoiseBundle::new(seed, p), None, |k, _, x, _, _| {
                if k == a {
                    base = x.to_vec();
                }
                for (slot, &n) in out.iter_mut().zip(&targets) {
                    if n == k {
                        *slot = dist_sq(x, &base);
                    }
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut moments = Vec::with_capacity(taus.len());
    let mut std_errors = Vec::with_capacity(taus.len());
    for j in 0..taus.len() {
        let mut m = RunningMean::new();
        per_path.iter().for_each(|v| m.push(v[j]));
        let mean = m.mean();
        let ss: T = per_path.iter().map(|v| (v[j] - mean) * (v[j] - mean)).sum();
        let var = ss / T::from_usize_lossy(n_paths - 1);
        moments.push(mean);
        std_errors.push((var / T::from_usize_lossy(n_paths)).sqrt());
    }
    let (xs, ys): (Vec<T>, Vec<T>) =
        taus.iter().zip(&moments).filter(|(_, &m)| m > T::zero()).map(|(&t, &m)| (t.ln(), m.ln())).unzip();
    Ok(ModulusReport {
        eps,
        anchor,
        taus: taus.to_vec(),
        moments,
        std_errors,
        slope: least_squares_line(&xs, &ys).map(|(s, _)| s),
        n_paths,
        seed,
    })
}
