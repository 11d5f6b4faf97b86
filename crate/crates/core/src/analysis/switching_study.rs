use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{Real, RunningMean};
use crate::rng::NoiseBundle;
use crate::switching::{
    occupation_deviation, quasi_stationary_schedule, simulate_chain, OccupationTarget, TimeWeight, TwoScaleGenerator,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingErgodicityRow<T> {
    pub eps: T,
    /// Monte Carlo mean of `sum_s (int (I{r = s} - nu_s) beta du)^2`.
    pub mean_square: T,
    pub std_error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingErgodicityReport<T> {
    pub rows: Vec<SwitchingErgodicityRow<T>>,
    /// Each value at most the previous one, in list order.
    pub decreasing: bool,
    pub n_paths: usize,
    pub seed: u64,
}

/// Squared occupation deviations of `r^eps` from its quasi-stationary
/// distribution on `[t0, t1]`, summed over states, for each `eps`. Path `p`
/// uses `NoiseBundle::new(seed, p)` for every `eps`.
#[allow(clippy::too_many_arguments)]
pub fn switching_ergodicity_study<T: Real>(
    gen: &TwoScaleGenerator<T>,
    eps: &[T],
    beta: &TimeWeight<T>,
    t0: T,
    t1: T,
    initial: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SwitchingErgodicityReport<T>> {
    if n_paths < 2 {
        return Err(Error::InvalidInput("at least two paths are required".into()));
    }
    let qsd = quasi_stationary_schedule(gen)?;
    let n = gen.n_states();
    let rows = eps
        .iter()
        .map(|&e| {
            let values: Vec<T> = (0..n_paths as u64)
                .into_par_iter()
                .map(|p| {
                    let path = simulate_chain(gen, e, t0, t1, initial, &NoiseBundle::new(seed, p))?;
                    let mut total = T::zero();
                    for s in 0..n {
                        let v = occupation_deviation(&path, &qsd, OccupationTarget::WithinClass(s), beta, t0, t1)?;
                        total += v * v;
                    }
                    Ok(total)
                })
                .collect::<Result<_>>()?;
            let mut m = RunningMean::new();
            values.iter().for_each(|&v| m.push(v));
            let mean = m.mean();
            let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
            let var = ss / T::from_usize_lossy(n_paths - 1);
            Ok(SwitchingErgodicityRow {
                eps: e,
                mean_square: mean,
                std_error: (var / T::from_usize_lossy(n_paths)).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let decreasing = rows.windows(2).all(|w| w[1].mean_square <= w[0].mean_square);
    Ok(SwitchingErgodicityReport { rows, decreasing, n_paths, seed })
}
