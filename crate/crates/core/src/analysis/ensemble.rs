use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate_averaged_with, simulate_coupled_with, AveragedDynamics, PathGrid};
use crate::model::SlowFastModel;
use crate::real::{Real, RunningMean};
use crate::rng::NoiseBundle;
use crate::switching::SwitchingPath;

/// What a terminal ensemble simulates.
#[derive(Clone, Copy)]
pub enum Simulator<'a, T: Real> {
    Coupled { model: &'a SlowFastModel<T>, eps: T },
    Averaged(&'a dyn AveragedDynamics<T>),
}

impl<T: Real> Simulator<'_, T> {
    fn slow_dim(&self) -> usize {
        match self {
            Simulator::Coupled { model, .. } => model.slow_dim(),
            Simulator::Averaged(a) => a.slow_dim(),
        }
    }

    /// Number of aggregated regime labels.
    fn labels(&self) -> usize {
        match self {
            Simulator::Coupled { model, .. } => model.switching().partition().n_classes(),
            Simulator::Averaged(a) => a.regime_generator().map_or(1, |q| q.dim()),
        }
    }

    fn label(&self, state: usize) -> usize {
        match self {
            Simulator::Coupled { model, .. } => model.switching().partition().class_of(state).unwrap_or(0),
            Simulator::Averaged(_) => state,
        }
    }

    /// Terminal slow state and the regime path of one realisation.
    fn run(&self, grid: &PathGrid<T>, noise: &NoiseBundle) -> Result<(Vec<T>, SwitchingPath<T>)> {
        let mut terminal = Vec::new();
        let last = grid.steps();
        let chain = match self {
            Simulator::Coupled { model, eps } => simulate_coupled_with(model, *eps, grid, noise, None, |k, _, x, _, _| {
                if k == last {
                    terminal = x.to_vec();
                }
            })?,
            Simulator::Averaged(a) => simulate_averaged_with(*a, grid, noise, None, |k, _, x, _| {
                if k == last {
                    terminal = x.to_vec();
                }
            })?,
        };
        Ok((terminal, chain))
    }
}

/// Terminal statistics of `n_paths` independent realisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary<T> {
    pub t_end: T,
    pub n_paths: usize,
    pub seed: u64,
    /// Ascending terminal samples, one vector per slow coordinate.
    pub sorted: Vec<Vec<T>>,
    pub mean: Vec<T>,
    /// Sample variance (divisor `n - 1`).
    pub variance: Vec<T>,
    /// Mean fraction of `[t0, T]` spent in each aggregated regime.
    pub occupation: Vec<T>,
}

/// Path `p` uses `NoiseBundle::new(seed, p)`; results are collected in path
/// order, so they do not depend on the thread count.
pub fn terminal_ensemble<T: Real>(
    sim: Simulator<'_, T>,
    n_paths: usize,
    grid: &PathGrid<T>,
    seed: u64,
) -> Result<EnsembleSummary<T>> {
    if n_paths < 2 {
        return Err(Error::InvalidInput("an ensemble needs at least two paths".into()));
    }
    let labels = sim.labels();
    let span = grid.t_end() - grid.t0();
    let runs: Vec<(Vec<T>, Vec<T>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let (x, chain) = sim.run(grid, &NoiseBundle::new(seed, p))?;
            let mut occ = vec![T::zero(); labels];
            if span > T::zero() {
                for (a, b, s) in chain.pieces() {
                    occ[sim.label(s)] += (b - a) / span;
                }
            } else {
                occ[sim.label(chain.initial_state())] = T::one();
            }
            Ok((x, occ))
        })
        .collect::<Result<_>>()?;
    let d = sim.slow_dim();
    let mut sorted = vec![Vec::with_capacity(n_paths); d];
    let mut occupation = vec![RunningMean::new(); labels];
    for (x, occ) in &runs {
        for (col, &v) in sorted.iter_mut().zip(x) {
            col.push(v);
        }
        for (m, &v) in occupation.iter_mut().zip(occ) {
            m.push(v);
        }
    }
    let mut mean = Vec::with_capacity(d);
    let mut variance = Vec::with_capacity(d);
    for col in &mut sorted {
        let mut m = RunningMean::new();
        col.iter().for_each(|&v| m.push(v));
        let mu = m.mean();
        let ss: T = col.iter().map(|&v| (v - mu) * (v - mu)).sum();
        mean.push(mu);
        variance.push(ss / T::from_usize_lossy(n_paths - 1));
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite terminal values"));
    }
    Ok(EnsembleSummary {
        t_end: grid.t_end(),
        n_paths,
        seed,
        sorted,
        mean,
        variance,
        occupation: occupation.iter().map(RunningMean::mean).collect(),
    })
}
