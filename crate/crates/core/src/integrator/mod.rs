//! Euler–Maruyama path simulation with compensated Poisson jumps.
//!
//! Slow step:
//! `dx = (f - sum_i w_i g(z_i)) dt + sigma sqrt(dt) Z + sum_{events} g(z)`,
//! fast step:
//! `dxi = (kappa - sum_i w_i theta(z_i)) dt/eps + varsigma sqrt(dt/eps) Z1 + sum_{events} theta(z)`,
//! with coefficients at the left endpoint, jump events drawn as
//! Poisson(`lambda dt`) (slow) and Poisson(`lambda dt / eps`) (fast) counts per
//! step and applied after the continuous increment, and the regime read from
//! an exactly simulated chain path.

mod grid;
mod noise;
mod path;

pub use grid::PathGrid;
pub use path::{JumpComponent, JumpEvent, SamplePath};

use noise::{NoiseShape, StepDraw, StepNoise};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{JumpMeasure, SlowFastModel};
use crate::real::{dist_sq, Real};
use crate::rng::{NoiseBundle, StreamLabel};
use crate::switching::{simulate_chain, simulate_ctmc, GeneratorSchedule, SwitchingPath};

/// Slow coefficients `(f, sigma, g)` as seen by the integrator. Implemented
/// by [`SlowFastModel`] and by averaged models.
pub trait SlowField<T: Real>: Sync {
    fn slow_dim(&self) -> usize;
    fn jump_measure(&self) -> &JumpMeasure<T>;
    fn has_noise(&self) -> bool;
    fn has_jumps(&self) -> bool;
    fn drift(&self, t: T, x: &[T], regime: usize, xi: &[T], out: &mut [T]) -> Result<()>;
    /// `out` is a `slow_dim x slow_dim` matrix.
    fn diffusion(&self, t: T, x: &[T], regime: usize, xi: &[T], out: &mut Matrix<T>) -> Result<()>;
    /// Jump size at atom `atom` of [`jump_measure`](Self::jump_measure).
    fn jump(&self, t: T, x: &[T], regime: usize, xi: &[T], atom: usize, out: &mut [T]) -> Result<()>;
}

impl<T: Real> SlowField<T> for SlowFastModel<T> {
    fn slow_dim(&self) -> usize {
        SlowFastModel::slow_dim(self)
    }

    fn jump_measure(&self) -> &JumpMeasure<T> {
        self.jumps()
    }

    fn has_noise(&self) -> bool {
        self.coefficients().has_slow_noise()
    }

    fn has_jumps(&self) -> bool {
        self.coefficients().has_slow_jump() && !self.jumps().is_empty()
    }

    fn drift(&self, _t: T, x: &[T], regime: usize, xi: &[T], out: &mut [T]) -> Result<()> {
        self.coefficients().drift(x, regime, xi, out);
        Ok(())
    }

    fn diffusion(&self, _t: T, x: &[T], regime: usize, xi: &[T], out: &mut Matrix<T>) -> Result<()> {
        self.coefficients().diffusion(x, regime, xi, out);
        Ok(())
    }

    fn jump(&self, _t: T, x: &[T], regime: usize, xi: &[T], atom: usize, out: &mut [T]) -> Result<()> {
        self.coefficients().jump(x, regime, xi, self.jumps().atom(atom), out);
        Ok(())
    }
}

/// A reduced slow-only system: slow coefficients without a fast argument,
/// initial data and an optional regime generator.
pub trait AveragedDynamics<T: Real>: SlowField<T> {
    fn initial_state(&self) -> &[T];
    fn initial_regime(&self) -> usize;
    /// Generator of the (aggregated) regime process; `None` for a single
    /// regime.
    fn regime_generator(&self) -> Option<&GeneratorSchedule<T>>;
}

struct SlowWork<T> {
    f: Vec<T>,
    g: Vec<T>,
    comp: Vec<T>,
    sigma: Matrix<T>,
}

impl<T: Real> SlowWork<T> {
    fn new(d: usize) -> Self {
        Self { f: vec![T::zero(); d], g: vec![T::zero(); d], comp: vec![T::zero(); d], sigma: Matrix::zeros(d, d) }
    }
}

/// Slow Euler increment with coefficients at `(x, regime, xi)`.
#[allow(clippy::too_many_arguments)]
fn slow_increment<T: Real, F: SlowField<T> + ?Sized>(
    field: &F,
    t: T,
    x: &[T],
    regime: usize,
    xi: &[T],
    dt: T,
    sqrt_dt: T,
    draw: &StepDraw<T>,
    ws: &mut SlowWork<T>,
    inc: &mut [T],
) -> Result<()> {
    field.drift(t, x, regime, xi, &mut ws.f)?;
    ws.comp.fill(T::zero());
    if field.has_jumps() {
        let measure = field.jump_measure();
        for atom in 0..measure.len() {
            field.jump(t, x, regime, xi, atom, &mut ws.g)?;
            let w = measure.weight(atom);
            for (c, &g) in ws.comp.iter_mut().zip(&ws.g) {
                *c += w * g;
            }
        }
    }
    for ((v, &f), &c) in inc.iter_mut().zip(&ws.f).zip(&ws.comp) {
        *v = (f - c) * dt;
    }
    if !draw.slow_z.is_empty() {
        field.diffusion(t, x, regime, xi, &mut ws.sigma)?;
        for (i, v) in inc.iter_mut().enumerate() {
            let s: T = ws.sigma.row(i).iter().zip(&draw.slow_z).fold(T::zero(), |a, (&r, &z)| a + r * z);
            *v += s * sqrt_dt;
        }
    }
    for &atom in &draw.slow_marks {
        field.jump(t, x, regime, xi, atom, &mut ws.g)?;
        for (v, &g) in inc.iter_mut().zip(&ws.g) {
            *v += g;
        }
    }
    Ok(())
}

struct FastWork<T> {
    k: Vec<T>,
    th: Vec<T>,
    comp: Vec<T>,
    vs: Matrix<T>,
}

impl<T: Real> FastWork<T> {
    fn new(d: usize) -> Self {
        Self { k: vec![T::zero(); d], th: vec![T::zero(); d], comp: vec![T::zero(); d], vs: Matrix::zeros(d, d) }
    }
}

/// Fast Euler increment on the time scale `eps`: `h = dt/eps`.
#[allow(clippy::too_many_arguments)]
fn fast_increment<T: Real>(
    model: &SlowFastModel<T>,
    x: &[T],
    xi: &[T],
    h: T,
    sqrt_h: T,
    draw: &StepDraw<T>,
    ws: &mut FastWork<T>,
    inc: &mut [T],
) {
    let c = model.coefficients();
    c.fast_drift(x, xi, &mut ws.k);
    ws.comp.fill(T::zero());
    if c.has_fast_jump() {
        model.fast_compensator(x, xi, &mut ws.comp);
    }
    for ((v, &k), &c) in inc.iter_mut().zip(&ws.k).zip(&ws.comp) {
        *v = (k - c) * h;
    }
    if !draw.fast_z.is_empty() {
        c.fast_diffusion(x, xi, &mut ws.vs);
        for (i, v) in inc.iter_mut().enumerate() {
            let s: T = ws.vs.row(i).iter().zip(&draw.fast_z).fold(T::zero(), |a, (&r, &z)| a + r * z);
            *v += s * sqrt_h;
        }
    }
    for &atom in &draw.fast_marks {
        c.fast_jump(x, xi, model.jumps().atom(atom), &mut ws.th);
        for (v, &th) in inc.iter_mut().zip(&ws.th) {
            *v += th;
        }
    }
}

fn check_step<T: Real>(grid: &PathGrid<T>, eps: T) -> Result<()> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    if grid.dt() > eps * (T::one() + T::lit(1e-9)) {
        return Err(Error::StepTooCoarse { dt: grid.dt().as_f64(), eps: eps.as_f64() });
    }
    Ok(())
}

fn coupled_shape<T: Real>(model: &SlowFastModel<T>, dt: T, eps: T, fast: bool) -> NoiseShape<T> {
    let c = model.coefficients();
    let lambda = model.jumps().total_rate();
    NoiseShape {
        slow_gaussian: if c.has_slow_noise() { model.slow_dim() } else { 0 },
        fast_gaussian: if fast && c.has_fast_noise() { model.fast_dim() } else { 0 },
        slow_jump_mean: SlowField::has_jumps(model).then(|| lambda * dt),
        fast_jump_mean: (fast && c.has_fast_jump() && !model.jumps().is_empty()).then(|| lambda * dt / eps),
    }
}

fn non_finite<T: Real>(node: usize, t: T) -> Error {
    Error::NonFinite { node, t: t.as_f64() }
}

fn all_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn log_jumps<T: Real>(log: &mut Vec<JumpEvent<T>>, t: T, draw: &StepDraw<T>, measure: &JumpMeasure<T>) {
    for &atom in &draw.slow_marks {
        log.push(JumpEvent { t, component: JumpComponent::Slow, atom, z: measure.atom(atom).to_vec() });
    }
    for &atom in &draw.fast_marks {
        log.push(JumpEvent { t, component: JumpComponent::Fast, atom, z: measure.atom(atom).to_vec() });
    }
}

/// Runs the coupled system, calling `observe(node, t, x, xi, regime)` at
/// every node, and returns the regime path. Jump events are appended to
/// `jump_log` when given.
pub fn simulate_coupled_with<T: Real>(
    model: &SlowFastModel<T>,
    eps: T,
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
    mut jump_log: Option<&mut Vec<JumpEvent<T>>>,
    mut observe: impl FnMut(usize, T, &[T], &[T], usize),
) -> Result<SwitchingPath<T>> {
    check_step(grid, eps)?;
    let chain = simulate_chain(model.switching(), eps, grid.t0(), grid.t_end(), model.r0(), noise)?;
    let dt = grid.dt();
    let (sqrt_dt, h) = (dt.sqrt(), dt / eps);
    let sqrt_h = h.sqrt();
    let mut sampler = StepNoise::new(noise, &coupled_shape(model, dt, eps, true));
    let mut draw = StepDraw::default();
    let mut slow_ws = SlowWork::new(model.slow_dim());
    let mut fast_ws = FastWork::new(model.fast_dim());
    let mut x = model.x0().to_vec();
    let mut xi = model.xi0().to_vec();
    let mut dx = vec![T::zero(); x.len()];
    let mut dxi = vec![T::zero(); xi.len()];
    let mut regime = chain.state_at(grid.t0());
    observe(0, grid.t0(), &x, &xi, regime);
    for k in 0..grid.steps() {
        sampler.draw(model.jumps(), &mut draw);
        slow_increment(model, grid.time(k), &x, regime, &xi, dt, sqrt_dt, &draw, &mut slow_ws, &mut dx)?;
        fast_increment(model, &x, &xi, h, sqrt_h, &draw, &mut fast_ws, &mut dxi);
        for (a, b) in x.iter_mut().zip(&dx) {
            *a += *b;
        }
        for (a, b) in xi.iter_mut().zip(&dxi) {
            *a += *b;
        }
        let t = grid.time(k + 1);
        if !all_finite(&x) || !all_finite(&xi) {
            return Err(non_finite(k + 1, t));
        }
        if let Some(log) = jump_log.as_deref_mut() {
            log_jumps(log, t, &draw, model.jumps());
        }
        regime = chain.state_at(t);
        observe(k + 1, t, &x, &xi, regime);
    }
    Ok(chain)
}

/// Full trajectory of the coupled slow-fast system.
pub fn simulate_coupled<T: Real>(
    model: &SlowFastModel<T>,
    eps: T,
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
) -> Result<SamplePath<T>> {
    let mut nodes = Vec::with_capacity(grid.nodes());
    let mut xs = Vec::with_capacity(grid.nodes() * model.slow_dim());
    let mut xis = Vec::with_capacity(grid.nodes() * model.fast_dim());
    let mut regimes = Vec::with_capacity(grid.nodes());
    let mut log = Vec::new();
    let chain = simulate_coupled_with(model, eps, grid, noise, Some(&mut log), |_, t, x, xi, r| {
        nodes.push(t);
        xs.extend_from_slice(x);
        xis.extend_from_slice(xi);
        regimes.push(r);
    })?;
    Ok(SamplePath {
        times: nodes,
        slow_dim: model.slow_dim(),
        fast_dim: model.fast_dim(),
        x: xs,
        xi: xis,
        regimes,
        switching: chain,
        jumps: log,
    })
}

/// Runs the frozen fast process
/// `dxi = kappa(x, xi) dt + varsigma dw1 + int theta N1~(dt, dz)` with the
/// slow state held at `x_frozen`, calling `observe(node, t, xi)` at each node.
pub fn simulate_frozen_fast_with<T: Real>(
    model: &SlowFastModel<T>,
    x_frozen: &[T],
    xi0: &[T],
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
    mut observe: impl FnMut(usize, T, &[T]),
) -> Result<()> {
    if x_frozen.len() != model.slow_dim() || xi0.len() != model.fast_dim() {
        return Err(Error::DimensionMismatch("frozen state".into()));
    }
    let dt = grid.dt();
    let mut shape = coupled_shape(model, dt, T::one(), true);
    shape.slow_gaussian = 0;
    shape.slow_jump_mean = None;
    let mut sampler = StepNoise::new(noise, &shape);
    let mut draw = StepDraw::default();
    let mut ws = FastWork::new(model.fast_dim());
    let sqrt_dt = dt.sqrt();
    let mut xi = xi0.to_vec();
    let mut dxi = vec![T::zero(); xi.len()];
    observe(0, grid.t0(), &xi);
    for k in 0..grid.steps() {
        sampler.draw(model.jumps(), &mut draw);
        fast_increment(model, x_frozen, &xi, dt, sqrt_dt, &draw, &mut ws, &mut dxi);
        for (a, b) in xi.iter_mut().zip(&dxi) {
            *a += *b;
        }
        let t = grid.time(k + 1);
        if !all_finite(&xi) {
            return Err(non_finite(k + 1, t));
        }
        observe(k + 1, t, &xi);
    }
    Ok(())
}

/// Trajectory of the frozen fast process started at `xi0`. The fast
/// coefficients do not depend on the regime, which is only recorded.
pub fn simulate_frozen_fast<T: Real>(
    model: &SlowFastModel<T>,
    x_frozen: &[T],
    regime: usize,
    xi0: &[T],
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
) -> Result<SamplePath<T>> {
    if regime >= model.switching().n_states() {
        return Err(Error::InvalidInput(format!("regime {regime} out of range")));
    }
    let mut path = SamplePath::with_capacity(
        grid.nodes(),
        model.slow_dim(),
        model.fast_dim(),
        SwitchingPath::constant(grid.t0(), grid.t_end(), regime),
    );
    simulate_frozen_fast_with(model, x_frozen, xi0, grid, noise, |_, t, xi| path.push(t, x_frozen, xi, regime))?;
    Ok(path)
}

/// Runs a reduced slow-only system, calling `observe(node, t, x, regime)`.
pub fn simulate_averaged_with<T: Real, A: AveragedDynamics<T> + ?Sized>(
    avg: &A,
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
    mut jump_log: Option<&mut Vec<JumpEvent<T>>>,
    mut observe: impl FnMut(usize, T, &[T], usize),
) -> Result<SwitchingPath<T>> {
    let (t0, t1) = (grid.t0(), grid.t_end());
    let chain = match avg.regime_generator() {
        Some(q) => {
            let segments = q.rate_segments(t0, t1)?;
            if avg.initial_regime() >= q.dim() {
                return Err(Error::InvalidInput(format!("initial regime {} out of range", avg.initial_regime())));
            }
            simulate_ctmc(&segments, t0, t1, avg.initial_regime(), &mut noise.stream(StreamLabel::Chain))?
        }
        None => SwitchingPath::constant(t0, t1, avg.initial_regime()),
    };
    let d = avg.slow_dim();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let lambda = avg.jump_measure().total_rate();
    let shape = NoiseShape {
        slow_gaussian: if avg.has_noise() { d } else { 0 },
        fast_gaussian: 0,
        slow_jump_mean: avg.has_jumps().then(|| lambda * dt),
        fast_jump_mean: None,
    };
    let mut sampler = StepNoise::new(noise, &shape);
    let mut draw = StepDraw::default();
    let mut ws = SlowWork::new(d);
    let mut x = avg.initial_state().to_vec();
    if x.len() != d {
        return Err(Error::DimensionMismatch("averaged initial state".into()));
    }
    let mut dx = vec![T::zero(); d];
    let mut regime = chain.state_at(t0);
    observe(0, t0, &x, regime);
    for k in 0..grid.steps() {
        sampler.draw(avg.jump_measure(), &mut draw);
        slow_increment(avg, grid.time(k), &x, regime, &[], dt, sqrt_dt, &draw, &mut ws, &mut dx)?;
        for (a, b) in x.iter_mut().zip(&dx) {
            *a += *b;
        }
        let t = grid.time(k + 1);
        if !all_finite(&x) {
            return Err(non_finite(k + 1, t));
        }
        if let Some(log) = jump_log.as_deref_mut() {
            log_jumps(log, t, &draw, avg.jump_measure());
        }
        regime = chain.state_at(t);
        observe(k + 1, t, &x, regime);
    }
    Ok(chain)
}

/// Full trajectory of a reduced slow-only system; `fast_dim` is zero.
pub fn simulate_averaged<T: Real, A: AveragedDynamics<T> + ?Sized>(
    avg: &A,
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
) -> Result<SamplePath<T>> {
    let mut path = SamplePath::with_capacity(
        grid.nodes(),
        avg.slow_dim(),
        0,
        SwitchingPath::constant(grid.t0(), grid.t_end(), avg.initial_regime()),
    );
    let mut log = Vec::new();
    let chain = simulate_averaged_with(avg, grid, noise, Some(&mut log), |_, t, x, r| path.push(t, x, &[], r))?;
    path.switching = chain;
    path.jumps = log;
    Ok(path)
}

/// One Picard iterate: slow and fast values at every grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardIterate<T> {
    pub x: Vec<T>,
    pub xi: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport<T> {
    pub times: Vec<T>,
    pub regime: usize,
    /// `x^0, x^1, ..., x^n`.
    pub iterates: Vec<PicardIterate<T>>,
    /// `Delta_n = sup_t |x^{n+1}(t) - x^n(t)|`, `n = 0..n_iters`.
    pub deltas: Vec<T>,
}

/// Picard sequence on a regime-frozen interval.
///
/// `x^0 = x0`, `xi^0 = xi0` at every node; iterate `n + 1` integrates the
/// coefficients evaluated along iterate `n` against one fixed realisation of
/// the noise. Discretely, iterate `n` agrees with the Euler path on the
/// first `n` steps.
pub fn picard_iterate<T: Real>(
    model: &SlowFastModel<T>,
    regime: usize,
    eps: T,
    grid: &PathGrid<T>,
    noise: &NoiseBundle,
    n_iters: usize,
) -> Result<PicardReport<T>> {
    check_step(grid, eps)?;
    if regime >= model.switching().n_states() {
        return Err(Error::InvalidInput(format!("regime {regime} out of range")));
    }
    let (dxd, dfd) = (model.slow_dim(), model.fast_dim());
    let dt = grid.dt();
    let (sqrt_dt, h) = (dt.sqrt(), dt / eps);
    let sqrt_h = h.sqrt();
    let mut sampler = StepNoise::new(noise, &coupled_shape(model, dt, eps, true));
    let tape: Vec<StepDraw<T>> = (0..grid.steps())
        .map(|_| {
            let mut d = StepDraw::default();
            sampler.draw(model.jumps(), &mut d);
            d
        })
        .collect();

    let nodes = grid.nodes();
    let mut current = PicardIterate {
        x: model.x0().repeat(nodes),
        xi: model.xi0().repeat(nodes),
    };
    let mut iterates = vec![current.clone()];
    let mut deltas = Vec::with_capacity(n_iters);
    let mut slow_ws = SlowWork::new(dxd);
    let mut fast_ws = FastWork::new(dfd);
    let mut dx = vec![T::zero(); dxd];
    let mut dxi = vec![T::zero(); dfd];
    for _ in 0..n_iters {
        let mut next = PicardIterate { x: Vec::with_capacity(nodes * dxd), xi: Vec::with_capacity(nodes * dfd) };
        next.x.extend_from_slice(model.x0());
        next.xi.extend_from_slice(model.xi0());
        for (k, draw) in tape.iter().enumerate() {
            let xk = &current.x[k * dxd..(k + 1) * dxd];
            let xik = &current.xi[k * dfd..(k + 1) * dfd];
            slow_increment(model, grid.time(k), xk, regime, xik, dt, sqrt_dt, draw, &mut slow_ws, &mut dx)?;
            fast_increment(model, xk, xik, h, sqrt_h, draw, &mut fast_ws, &mut dxi);
            for (i, &d) in dx.iter().enumerate() {
                let v = next.x[k * dxd + i] + d;
                next.x.push(v);
            }
            for (i, &d) in dxi.iter().enumerate() {
                let v = next.xi[k * dfd + i] + d;
                next.xi.push(v);
            }
            if !all_finite(&next.x[(k + 1) * dxd..]) || !all_finite(&next.xi[(k + 1) * dfd..]) {
                return Err(non_finite(k + 1, grid.time(k + 1)));
            }
        }
        let delta = (0..nodes)
            .map(|k| dist_sq(&next.x[k * dxd..(k + 1) * dxd], &current.x[k * dxd..(k + 1) * dxd]).sqrt())
            .fold(T::zero(), T::max);
        deltas.push(delta);
        iterates.push(next.clone());
        current = next;
    }
    Ok(PicardReport { times: (0..nodes).map(|k| grid.time(k)).collect(), regime, iterates, deltas })
}
