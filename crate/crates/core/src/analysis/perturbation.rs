use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate_coupled_with, simulate_frozen_fast_with, AveragedDynamics, PathGrid};
use crate::model::SlowFastModel;
use crate::real::{dot, Real, RunningMean};
use crate::rng::NoiseBundle;
use crate::switching::simulate_chain;

/// Gradient of a test function, written into the output slice.
pub type Gradient<'a, T> = &'a (dyn Fn(&[T], &mut [T]) + Sync);

/// Gradient of the smooth compactly supported bump
/// `exp(-1 / (1 - |x - c|^2 / R^2))` on `|x - c| < R`.
pub fn bump_gradient<T: Real>(center: &[T], radius: T, x: &[T], out: &mut [T]) {
    let r2 = radius * radius;
    let s = x.iter().zip(center).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>() / r2;
    if s >= T::one() {
        out.fill(T::zero());
        return;
    }
    let v = (-T::one() / (T::one() - s)).exp();
    let scale = -T::lit(2.0) * v / (r2 * (T::one() - s) * (T::one() - s));
    for ((o, a), b) in out.iter_mut().zip(x).zip(center) {
        *o = scale * (*a - *b);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSettings<T> {
    pub eps: T,
    /// Times at which the correction is evaluated, each a node of the outer grid.
    pub t_points: Vec<T>,
    pub t_end: T,
    /// Outer step; the coupled runs use `min(dt, eps)`.
    pub dt: T,
    /// Inner step in fast time `(u - t) / eps`.
    pub inner_fast_dt: T,
    pub n_outer: usize,
    pub n_inner: usize,
    pub seed: u64,
    /// Largest allowed `n_outer * n_inner * t_points.len()`.
    pub budget_cap: usize,
}

impl<T: Real> PerturbationSettings<T> {
    pub fn new(eps: T, t_points: Vec<T>, t_end: T, n_outer: usize, n_inner: usize, seed: u64) -> Self {
        Self {
            eps,
            t_points,
            t_end,
            dt: T::lit(1e-3),
            inner_fast_dt: T::lit(0.05),
            n_outer,
            n_inner,
            seed,
            budget_cap: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport<T> {
    pub eps: T,
    pub t_points: Vec<T>,
    /// Mean over outer paths of `|iota_1(t)|` per time point.
    pub mean_abs: Vec<T>,
    /// Mean over outer paths of `max_t |iota_1(t)|`.
    pub sup_estimate: T,
    pub sup_std_error: T,
    /// Mean over outer paths of `max_t` three inner standard errors.
    pub inner_noise_floor: T,
    pub n_outer: usize,
    pub n_inner: usize,
    pub seed: u64,
}

struct Snapshot<T> {
    x: Vec<T>,
    xi: Vec<T>,
    regime: usize,
}

/// Nested Monte Carlo estimate of the first-order drift correction
/// `iota_1(t) = int_t^T grad iota(x) . E_t[f(x, r(u), xi(u / eps; x)) - f_bar(x)] du`
/// along coupled paths. The inner runs freeze `x` at its value at `t` and
/// restart the fast pair and the chain there.
pub fn perturbation_magnitude<T: Real>(
    model: &SlowFastModel<T>,
    averaged: &dyn AveragedDynamics<T>,
    gradient: Gradient<'_, T>,
    settings: &PerturbationSettings<T>,
) -> Result<PerturbationReport<T>> {
    let s = settings;
    if s.n_outer < 2 || s.n_inner < 2 {
        return Err(Error::InvalidInput("at least two outer and two inner paths are required".into()));
    }
    let requested = s.n_outer.saturating_mul(s.n_inner).saturating_mul(s.t_points.len());
    if requested > s.budget_cap {
        return Err(Error::BudgetExceeded { requested, cap: s.budget_cap });
    }
    if s.t_points.iter().any(|&t| !(t >= T::zero() && t <= s.t_end)) {
        return Err(Error::InvalidInput("evaluation times must lie in [0, T]".into()));
    }
    if !(s.inner_fast_dt > T::zero() && s.inner_fast_dt <= T::one()) {
        return Err(Error::InvalidInput("inner fast step must lie in (0, 1]".into()));
    }
    let grid = PathGrid::new(T::zero(), s.t_end, s.dt.min(s.eps))?;
    let nodes: Vec<usize> = s
        .t_points
        .iter()
        .map(|&t| grid.node_at(t).ok_or_else(|| Error::InvalidInput(format!("time {t} is not an outer grid node"))))
        .collect::<Result<_>>()?;
    let d = model.slow_dim();
    let partition = model.switching().partition();
    let classes = partition.n_classes();

    let per_outer: Vec<(Vec<T>, Vec<T>)> = (0..s.n_outer as u64)
        .into_par_iter()
        .map(|p| {
            let outer = NoiseBundle::new(s.seed, p);
            let mut snaps: Vec<Option<Snapshot<T>>> = (0..nodes.len()).map(|_| None).collect();
            simulate_coupled_with(model, s.eps, &grid, &outer, None, |k, _, x, xi, r| {
                for (slot, &n) in snaps.iter_mut().zip(&nodes) {
                    if n == k {
                        *slot = Some(Snapshot { x: x.to_vec(), xi: xi.to_vec(), regime: r });
                    }
                }
            })?;
            let mut values = Vec::with_capacity(nodes.len());
            let mut errors = Vec::with_capacity(nodes.len());
            for (q, snap) in snaps.into_iter().enumerate() {
                let snap = snap.expect("every evaluation time is a grid node");
                let t = s.t_points[q];
                let mut grad = vec![T::zero(); d];
                gradient(&snap.x, &mut grad);
                let span = s.t_end - t;
                if span <= T::zero() || grad.iter().all(|g| *g == T::zero()) {
                    values.push(T::zero());
                    errors.push(T::zero());
                    continue;
                }
                let steps = (span / (s.eps * s.inner_fast_dt)).ceil().to_usize().unwrap_or(1).max(1);
                let h = span / (s.eps * T::from_usize_lossy(steps));
                let du = s.eps * h;
                let fast_grid = PathGrid::new(T::zero(), span / s.eps, h)?;
                // grad . f_bar(u_k, x, class) on the inner time grid.
                let mut fbar = vec![T::zero(); steps * classes];
                let mut buf = vec![T::zero(); d];
                for k in 0..steps {
                    let u = t + du * T::from_usize_lossy(k);
                    for c in 0..classes {
                        averaged.drift(u, &snap.x, c, &[], &mut buf)?;
                        fbar[k * classes + c] = dot(&grad, &buf);
                    }
                }
                let mut samples = Vec::with_capacity(s.n_inner);
                for j in 0..s.n_inner {
                    let inner = outer.child((q * s.n_inner + j) as u64 + 1);
                    let chain = simulate_chain(model.switching(), s.eps, t, s.t_end, snap.regime, &inner)?;
                    let mut f = vec![T::zero(); d];
                    let mut total = T::zero();
                    simulate_frozen_fast_with(model, &snap.x, &snap.xi, &fast_grid, &inner, |k, _, xi| {
                        if k >= steps {
                            return;
                        }
                        let u = t + du * T::from_usize_lossy(k);
                        let r = chain.state_at(u);
                        let c = partition.class_of(r).unwrap_or(0);
                        model.coefficients().drift(&snap.x, r, xi, &mut f);
                        total += (dot(&grad, &f) - fbar[k * classes + c]) * du;
                    })?;
                    samples.push(total);
                }
                let mut m = RunningMean::new();
                samples.iter().for_each(|&v| m.push(v));
                let mean = m.mean();
                let ss: T = samples.iter().map(|&v| (v - mean) * (v - mean)).sum();
                let var = ss / T::from_usize_lossy(s.n_inner - 1);
                values.push(mean);
                errors.push((var / T::from_usize_lossy(s.n_inner)).sqrt());
            }
            Ok((values, errors))
        })
        .collect::<Result<_>>()?;

    let n_t = s.t_points.len();
    let mut mean_abs = vec![RunningMean::new(); n_t];
    let mut sup = RunningMean::new();
    let mut floor = RunningMean::new();
    let mut sups = Vec::with_capacity(s.n_outer);
    for (values, errors) in &per_outer {
        for (m, v) in mean_abs.iter_mut().zip(values) {
            m.push(v.abs());
        }
        let top = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        sup.push(top);
        sups.push(top);
        floor.push(errors.iter().fold(T::zero(), |a, e| a.max(T::lit(3.0) * *e)));
    }
    let sup_mean = sup.mean();
    let ss: T = sups.iter().map(|&v| (v - sup_mean) * (v - sup_mean)).sum();
    let n = T::from_usize_lossy(s.n_outer);
    Ok(PerturbationReport {
        eps: s.eps,
        t_points: s.t_points.clone(),
        mean_abs: mean_abs.iter().map(RunningMean::mean).collect(),
        sup_estimate: sup_mean,
        sup_std_error: (ss / (n - T::one()) / n).sqrt(),
        inner_noise_floor: floor.mean(),
        n_outer: s.n_outer,
        n_inner: s.n_inner,
        seed: s.seed,
    })
}
