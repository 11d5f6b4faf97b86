use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassPartition, QuasiStationaryDistribution, TwoScaleGenerator};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;
use crate::rng::{NoiseBundle, StreamLabel};

/// Constant rate matrix on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSegment<T> {
    pub start: T,
    pub end: T,
    pub rates: Matrix<T>,
}

/// Piecewise-constant, right-continuous path of a finite-state chain on
/// `[start, end]`. `states[k]` holds on `[jump_times[k-1], jump_times[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPath<T> {
    start: T,
    end: T,
    jump_times: Vec<T>,
    states: Vec<usize>,
}

impl<T: Real> SwitchingPath<T> {
    pub fn constant(start: T, end: T, state: usize) -> Self {
        Self { start, end, jump_times: Vec::new(), states: vec![state] }
    }

    /// Builds a path from its initial state and `(time, new state)` jumps.
    /// Jump times must be strictly increasing inside `(start, end]` and
    /// consecutive states must differ.
    pub fn from_jumps(start: T, end: T, initial: usize, jumps: &[(T, usize)]) -> Result<Self> {
        let mut path = Self::constant(start, end, initial);
        for &(t, s) in jumps {
            let last_t = path.jump_times.last().copied().unwrap_or(start);
            if !(t > last_t) || t > end {
                return Err(Error::InvalidInput(format!("jump time {t} out of order")));
            }
            if s == *path.states.last().unwrap() {
                return Err(Error::InvalidInput(format!("jump at {t} does not change state")));
            }
            path.jump_times.push(t);
            path.states.push(s);
        }
        Ok(path)
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    pub fn jump_times(&self) -> &[T] {
        &self.jump_times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().unwrap()
    }

    /// State at `t`, taking the value after any jump at exactly `t`.
    pub fn state_at(&self, t: T) -> usize {
        self.states[self.jump_times.partition_point(|&j| j <= t)]
    }

    /// Constant pieces `(from, to, state)` covering `[start, end]`.
    pub fn pieces(&self) -> impl Iterator<Item = (T, T, usize)> + '_ {
        (0..self.states.len()).map(move |k| {
            let from = if k == 0 { self.start } else { self.jump_times[k - 1] };
            let to = self.jump_times.get(k).copied().unwrap_or(self.end);
            (from, to, self.states[k])
        })
    }

    /// Time spent in `state` during `[a, b]`.
    pub fn occupation_time(&self, state: usize, a: T, b: T) -> T {
        self.pieces()
            .filter(|p| p.2 == state)
            .map(|(from, to, _)| (to.min(b) - from.max(a)).max(T::zero()))
            .sum()
    }
}

/// Draws an exact sample of a piecewise-constant-rate chain.
///
/// Holding times are exponential with the diagonal rate of the current
/// segment; a holding time that crosses a segment boundary is discarded and
/// redrawn from the boundary, which is exact by memorylessness.
pub fn simulate_ctmc<T: Real, R: Rng + ?Sized>(
    segments: &[RateSegment<T>],
    start: T,
    end: T,
    initial: usize,
    rng: &mut R,
) -> Result<SwitchingPath<T>> {
    let mut path = SwitchingPath::constant(start, end, initial);
    if segments.iter().any(|seg| initial >= seg.rates.rows()) {
        return Err(Error::InvalidInput(format!("initial state {initial} out of range")));
    }
    let mut state = initial;
    for seg in segments {
        let mut t = seg.start;
        loop {
            let rate = -seg.rates[(state, state)];
            if !(rate > T::zero()) {
                break;
            }
            let u = T::unit_uniform(rng);
            let hold = -(T::one() - u).ln() / rate;
            if t + hold >= seg.end {
                break;
            }
            t += hold;
            let target = rate * T::unit_uniform(rng);
            let mut acc = T::zero();
            let mut next = None;
            for j in 0..seg.rates.cols() {
                if j == state {
                    continue;
                }
                let r = seg.rates[(state, j)];
                if r <= T::zero() {
                    continue;
                }
                acc += r;
                next = Some(j);
                if target < acc {
                    break;
                }
            }
            // `next` falls back to the last positive rate when rounding leaves
            // `target` above the accumulated sum.
            let next = next.expect("positive exit rate implies a target state");
            path.jump_times.push(t);
            path.states.push(next);
            state = next;
        }
    }
    Ok(path)
}

/// Exact sample of `r^eps` on `[t0, t1]` driven by the chain stream of `noise`.
pub fn simulate_chain<T: Real>(
    gen: &TwoScaleGenerator<T>,
    eps: T,
    t0: T,
    t1: T,
    initial: usize,
    noise: &NoiseBundle,
) -> Result<SwitchingPath<T>> {
    if initial >= gen.n_states() {
        return Err(Error::InvalidInput(format!(
            "initial state {initial} outside 0..{}",
            gen.n_states()
        )));
    }
    let segments = gen.segments(eps, t0, t1)?;
    simulate_ctmc(&segments, t0, t1, initial, &mut noise.stream(StreamLabel::Chain))
}

/// Class-label process: each state replaced by its class, repeated labels merged.
pub fn aggregate_path<T: Real>(
    path: &SwitchingPath<T>,
    partition: &ClassPartition,
) -> Result<SwitchingPath<T>> {
    let class = |s: usize| {
        partition
            .class_of(s)
            .ok_or_else(|| Error::InvalidInput(format!("state {s} outside the partition")))
    };
    let mut out = SwitchingPath::constant(path.start, path.end, class(path.states[0])?);
    for (k, &t) in path.jump_times.iter().enumerate() {
        let c = class(path.states[k + 1])?;
        if c != out.final_state() {
            out.jump_times.push(t);
            out.states.push(c);
        }
    }
    Ok(out)
}

/// Deterministic time weight `beta(u)` in occupation integrals.
#[derive(Clone)]
pub enum TimeWeight<T> {
    Constant(T),
    Function(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> std::fmt::Debug for TimeWeight<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeWeight::Constant(c) => write!(f, "Constant({c})"),
            TimeWeight::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl<T: Real> TimeWeight<T> {
    /// `int_a^b beta(u) du`; exact for constants, composite 5-point
    /// Gauss-Legendre on panels of width at most 1/64 otherwise.
    pub fn integral(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        match self {
            TimeWeight::Constant(c) => *c * (b - a),
            TimeWeight::Function(f) => {
                const NODES: [f64; 5] =
                    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
                const WEIGHTS: [f64; 5] = [
                    0.568_888_888_888_888_9,
                    0.478_628_670_499_366_5,
                    0.478_628_670_499_366_5,
                    0.236_926_885_056_189_1,
                    0.236_926_885_056_189_1,
                ];
                let panels = ((b - a) * T::lit(64.0)).ceil().to_usize().unwrap_or(1).max(1);
                let h = (b - a) / T::from_usize_lossy(panels);
                let mut total = T::zero();
                for p in 0..panels {
                    let lo = a + h * T::from_usize_lossy(p);
                    let mid = lo + h / T::lit(2.0);
                    let half = h / T::lit(2.0);
                    for (x, w) in NODES.iter().zip(WEIGHTS) {
                        total += T::lit(w) * f(mid + half * T::lit(*x));
                    }
                }
                total * h / T::lit(2.0)
            }
        }
    }
}

/// Which indicator an occupation integral tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupationTarget {
    /// `I{r = s} - nu_s(u)`; the single-class form.
    State(usize),
    /// `I{r = s} - nu^gamma_s(u) I{class(r) = gamma}` with `gamma` the class of `s`.
    WithinClass(usize),
}

/// `int_a^b (indicator - nu term) beta(u) du` evaluated exactly over the
/// constant pieces of `path` and of the distribution schedule.
pub fn occupation_deviation<T: Real>(
    path: &SwitchingPath<T>,
    qsd: &QuasiStationaryDistribution<T>,
    target: OccupationTarget,
    beta: &TimeWeight<T>,
    a: T,
    b: T,
) -> Result<T> {
    if a < path.start || b > path.end || b < a {
        return Err(Error::InvalidInput(format!(
            "integration window [{a}, {b}] outside path [{}, {}]",
            path.start, path.end
        )));
    }
    let partition = qsd.partition();
    let (state, within_class) = match target {
        OccupationTarget::State(s) => (s, false),
        OccupationTarget::WithinClass(s) => (s, true),
    };
    let class = partition
        .class_of(state)
        .ok_or_else(|| Error::InvalidInput(format!("state {state} outside the partition")))?;
    let mut cuts: Vec<T> = path
        .jump_times
        .iter()
        .chain(qsd.breakpoints())
        .copied()
        .filter(|&t| t > a && t < b)
        .collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = T::zero();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let current = path.state_at(lo);
        let indicator = if current == state { T::one() } else { T::zero() };
        let nu = qsd.state_weight(state, lo)?;
        let gate = if !within_class || partition.class_of(current) == Some(class) {
            T::one()
        } else {
            T::zero()
        };
        let coefficient = indicator - nu * gate;
        if coefficient != T::zero() {
            total += coefficient * beta.integral(lo, hi);
        }
    }
    Ok(total)
}
