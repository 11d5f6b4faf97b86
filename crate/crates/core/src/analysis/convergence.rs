use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{ks_statistic, wasserstein1};
use super::ensemble::{terminal_ensemble, EnsembleSummary, Simulator};
use crate::error::{Error, Result};
use crate::integrator::{AveragedDynamics, PathGrid};
use crate::model::SlowFastModel;
use crate::real::{least_squares_line, Real};
use crate::rng::derive_seed;

/// Seed roles: each ensemble of a study draws from its own seed.
const ROLE_REFERENCE: u64 = 0;
const ROLE_FLOOR: u64 = 1;
const ROLE_EPS: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings<T> {
    /// Strictly descending.
    pub eps: Vec<T>,
    pub t0: T,
    pub t_end: T,
    /// Step size; with `cap_dt_at_eps` each run uses `min(dt, eps)`.
    pub dt: T,
    pub cap_dt_at_eps: bool,
    pub n_paths: usize,
    pub seed: u64,
    /// Independent averaged ensembles compared against the reference to
    /// estimate the noise floor.
    pub floor_replicates: usize,
}

impl<T: Real> ConvergenceSettings<T> {
    pub fn new(eps: Vec<T>, t_end: T, dt: T, n_paths: usize, seed: u64) -> Self {
        Self { eps, t0: T::zero(), t_end, dt, cap_dt_at_eps: true, n_paths, seed, floor_replicates: 4 }
    }

    fn step_for(&self, eps: T) -> T {
        if self.cap_dt_at_eps {
            self.dt.min(eps)
        } else {
            self.dt
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow<T> {
    pub eps: T,
    pub dt: T,
    /// Per slow coordinate.
    pub w1: Vec<T>,
    pub ks: Vec<T>,
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    /// Mean occupation fraction of each aggregated regime.
    pub occupation: Vec<T>,
    /// Largest absolute occupation difference to the averaged ensemble.
    pub occupation_gap: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport<T> {
    pub rows: Vec<ConvergenceRow<T>>,
    /// Mean W1 between the reference and each independent averaged replicate.
    pub noise_floor_w1: Vec<T>,
    pub noise_floor_ks: Vec<T>,
    /// Occupation gap between averaged replicates.
    pub noise_floor_occupation: T,
    pub averaged_dt: T,
    pub averaged_mean: Vec<T>,
    pub averaged_variance: Vec<T>,
    pub averaged_occupation: Vec<T>,
    /// Least-squares slope of `log W1` against `log eps` per coordinate,
    /// over points above twice the floor; `None` with fewer than two.
    pub slope: Vec<Option<T>>,
    /// W1 strictly decreasing along the eps list in every coordinate.
    pub strictly_decreasing: bool,
    /// Last-row W1 divided by the floor, per coordinate.
    pub final_floor_ratio: Vec<T>,
    pub n_paths: usize,
    pub seed: u64,
}

fn max_gap<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

fn distances<T: Real>(a: &EnsembleSummary<T>, b: &EnsembleSummary<T>) -> Result<(Vec<T>, Vec<T>)> {
    let w1 = a.sorted.iter().zip(&b.sorted).map(|(x, y)| wasserstein1(x, y)).collect::<Result<_>>()?;
    let ks = a.sorted.iter().zip(&b.sorted).map(|(x, y)| ks_statistic(x, y)).collect::<Result<_>>()?;
    Ok((w1, ks))
}

/// Compares terminal marginals of the coupled system at each `eps` with the
/// averaged system. The reference averaged ensemble, the floor replicates and
/// every coupled ensemble use disjoint seeds.
pub fn weak_convergence_study<T: Real>(
    model: &SlowFastModel<T>,
    averaged: &dyn AveragedDynamics<T>,
    settings: &ConvergenceSettings<T>,
) -> Result<ConvergenceReport<T>> {
    let s = settings;
    if s.eps.windows(2).any(|w| !(w[1] < w[0])) || s.eps.iter().any(|&e| !(e > T::zero())) {
        return Err(Error::InvalidInput("eps list must be positive and strictly descending".into()));
    }
    if s.floor_replicates == 0 {
        return Err(Error::InvalidInput("at least one floor replicate is required".into()));
    }
    if averaged.slow_dim() != model.slow_dim() {
        return Err(Error::DimensionMismatch("averaged and coupled slow dimensions".into()));
    }
    let averaged_dt = s.eps.iter().map(|&e| s.step_for(e)).fold(s.dt, T::min);
    let avg_grid = PathGrid::new(s.t0, s.t_end, averaged_dt)?;
    let avg_sim = Simulator::Averaged(averaged);
    let reference = terminal_ensemble(avg_sim, s.n_paths, &avg_grid, derive_seed(s.seed, ROLE_REFERENCE))?;

    let replicates: Vec<EnsembleSummary<T>> = (0..s.floor_replicates as u64)
        .into_par_iter()
        .map(|j| terminal_ensemble(avg_sim, s.n_paths, &avg_grid, derive_seed(s.seed, ROLE_FLOOR + j)))
        .collect::<Result<_>>()?;
    let d = model.slow_dim();
    let mut floor_w1 = vec![T::zero(); d];
    let mut floor_ks = vec![T::zero(); d];
    let mut floor_occ = T::zero();
    let k = T::from_usize_lossy(replicates.len());
    for rep in &replicates {
        let (w1, ks) = distances(&reference, rep)?;
        for i in 0..d {
            floor_w1[i] += w1[i] / k;
            floor_ks[i] += ks[i] / k;
        }
        floor_occ += max_gap(&reference.occupation, &rep.occupation) / k;
    }

    let rows: Vec<ConvergenceRow<T>> = s
        .eps
        .par_iter()
        .enumerate()
        .map(|(idx, &eps)| {
            let dt = s.step_for(eps);
            let grid = PathGrid::new(s.t0, s.t_end, dt)?;
            let sim = Simulator::Coupled { model, eps };
            let ens = terminal_ensemble(sim, s.n_paths, &grid, derive_seed(s.seed, ROLE_EPS + idx as u64))?;
            let (w1, ks) = distances(&ens, &reference)?;
            let occupation_gap = if ens.occupation.len() == reference.occupation.len() {
                max_gap(&ens.occupation, &reference.occupation)
            } else {
                T::nan()
            };
            Ok(ConvergenceRow {
                eps,
                dt,
                w1,
                ks,
                mean: ens.mean,
                variance: ens.variance,
                occupation: ens.occupation,
                occupation_gap,
            })
        })
        .collect::<Result<_>>()?;

    let strictly_decreasing = rows.windows(2).all(|w| (0..d).all(|i| w[1].w1[i] < w[0].w1[i]));
    let slope = (0..d)
        .map(|i| {
            let (xs, ys): (Vec<T>, Vec<T>) = rows
                .iter()
                .filter(|r| r.w1[i] > T::lit(2.0) * floor_w1[i])
                .map(|r| (r.eps.ln(), r.w1[i].ln()))
                .unzip();
            least_squares_line(&xs, &ys).map(|(m, _)| m)
        })
        .collect();
    let final_floor_ratio = match rows.last() {
        Some(r) => (0..d).map(|i| r.w1[i] / floor_w1[i]).collect(),
        None => Vec::new(),
    };
    Ok(ConvergenceReport {
        rows,
        noise_floor_w1: floor_w1,
        noise_floor_ks: floor_ks,
        noise_floor_occupation: floor_occ,
        averaged_dt,
        averaged_mean: reference.mean,
        averaged_variance: reference.variance,
        averaged_occupation: reference.occupation,
        slope,
        strictly_decreasing,
        final_floor_ratio,
        n_paths: s.n_paths,
        seed: s.seed,
    })
}
