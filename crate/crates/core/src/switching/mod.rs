//! Two-time-scale Markov switching: generator schedules, weak irreducibility
//! and quasi-stationary distributions, the aggregated generator, and exact
//! simulation of the switching chain.
//!
//! States and classes are indexed from zero. Time-dependent generators are
//! piecewise constant; at a breakpoint the right-limit generator applies.

mod chain;

pub use chain::{
    aggregate_path, occupation_deviation, simulate_chain, simulate_ctmc, OccupationTarget,
    RateSegment, SwitchingPath, TimeWeight,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::real::Real;

/// Absolute tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Singular values at or below this (relative to `max(1, largest)`) count as zero.
pub const RANK_TOL: f64 = 1e-10;

fn row_sum_tol<T: Real>(row_scale: T) -> T {
    T::lit(ROW_SUM_TOL).max(T::lit(16.0) * T::epsilon() * row_scale)
}

/// Checks the generator invariants: square, finite, nonnegative
/// off-diagonal rates, zero row sums.
pub fn validate_generator<T: Real>(q: &Matrix<T>) -> Result<()> {
    if !q.is_square() || q.rows() == 0 {
        return Err(Error::InvalidGenerator(format!(
            "expected a non-empty square matrix, got {}x{}",
            q.rows(),
            q.cols()
        )));
    }
    if !q.is_finite() {
        return Err(Error::InvalidGenerator("non-finite entry".into()));
    }
    for i in 0..q.rows() {
        let mut sum = T::zero();
        let mut scale = T::zero();
        for j in 0..q.cols() {
            let v = q[(i, j)];
            if i != j && v < T::zero() {
                return Err(Error::InvalidGenerator(format!(
                    "negative off-diagonal rate {v} at ({i}, {j})"
                )));
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum.abs() > row_sum_tol(scale) {
            return Err(Error::InvalidGenerator(format!("row {i} sums to {sum}, not 0")));
        }
    }
    Ok(())
}

/// Returns the quasi-stationary distribution of a weakly irreducible
/// generator: the unique nonnegative `nu` with `nu Q = 0`, `sum(nu) = 1`.
///
/// The null space of `Q^T` is sized from its singular values; exactly one
/// vanishing singular value is required. The distribution itself comes from
/// the bordered system (one equation of `Q^T nu = 0` replaced by the
/// normalisation), which is nonsingular precisely in that case.
pub fn check_weak_irreducibility<T: Real>(q: &Matrix<T>) -> Result<Vec<T>> {
    validate_generator(q)?;
    let n = q.rows();
    if n == 1 {
        return Ok(vec![T::one()]);
    }
    let qt = q.transpose();
    let (sigma, _) = qt.svd_jacobi();
    let largest = sigma.iter().fold(T::zero(), |m, &s| m.max(s));
    let tol = T::lit(RANK_TOL) * largest.max(T::one());
    let null_dim = sigma.iter().filter(|&&s| s <= tol).count();
    if null_dim != 1 {
        return Err(Error::NotWeaklyIrreducible {
            location: String::new(),
            detail: format!("null space of Q^T has dimension {null_dim}"),
        });
    }
    let mut bordered = qt;
    for j in 0..n {
        bordered[(n - 1, j)] = T::one();
    }
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let mut nu = bordered.solve(&rhs).ok_or_else(|| Error::NotWeaklyIrreducible {
        location: String::new(),
        detail: "bordered system is singular".into(),
    })?;
    let sign_tol = T::lit(RANK_TOL);
    if let Some(&bad) = nu.iter().find(|&&v| v < -sign_tol) {
        return Err(Error::NotWeaklyIrreducible {
            location: String::new(),
            detail: format!("null vector changes sign (component {bad})"),
        });
    }
    for v in nu.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let total: T = nu.iter().copied().sum();
    if (total - T::one()).abs() > T::epsilon() {
        for v in nu.iter_mut() {
            *v /= total;
        }
    }
    Ok(nu)
}

/// Piecewise-constant generator: segment `k` covers `[breakpoints[k], breakpoints[k+1])`,
/// the last segment is closed at its right end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSchedule<T> {
    breakpoints: Vec<T>,
    matrices: Vec<Matrix<T>>,
}

impl<T: Real> GeneratorSchedule<T> {
    /// Time-homogeneous generator valid on the whole real line.
    pub fn constant(q: Matrix<T>) -> Result<Self> {
        Self::piecewise(vec![T::neg_infinity(), T::infinity()], vec![q])
    }

    pub fn zero(n: usize) -> Self {
        Self { breakpoints: vec![T::neg_infinity(), T::infinity()], matrices: vec![Matrix::zeros(n, n)] }
    }

    pub fn piecewise(breakpoints: Vec<T>, matrices: Vec<Matrix<T>>) -> Result<Self> {
        if matrices.is_empty() || breakpoints.len() != matrices.len() + 1 {
            return Err(Error::InvalidGenerator(format!(
                "{} breakpoints for {} segments (expected segments + 1)",
                breakpoints.len(),
                matrices.len()
            )));
        }
        if breakpoints.iter().any(|b| b.is_nan()) || breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidGenerator("breakpoints must be nondecreasing".into()));
        }
        let n = matrices[0].rows();
        for (k, m) in matrices.iter().enumerate() {
            if m.rows() != n || m.cols() != n {
                return Err(Error::InvalidGenerator(format!("segment {k} has a different size")));
            }
            validate_generator(m)
                .map_err(|e| Error::InvalidGenerator(format!("segment {k}: {e}")))?;
        }
        Ok(Self { breakpoints, matrices })
    }

    pub fn dim(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn matrices(&self) -> &[Matrix<T>] {
        &self.matrices
    }

    pub fn segment_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn start(&self) -> T {
        self.breakpoints[0]
    }

    pub fn end(&self) -> T {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Segment in force at `t` (right-limit convention at breakpoints).
    pub fn segment_index(&self, t: T) -> Result<usize> {
        if t.is_nan() || t < self.start() || t > self.end() {
            return Err(Error::ScheduleGap { t: t.as_f64() });
        }
        let last = self.matrices.len() - 1;
        // First breakpoint strictly greater than t, minus one.
        let k = self.breakpoints[1..].partition_point(|&b| b <= t);
        Ok(k.min(last))
    }

    pub fn at(&self, t: T) -> Result<&Matrix<T>> {
        Ok(&self.matrices[self.segment_index(t)?])
    }

    pub fn covers(&self, t0: T, t1: T) -> bool {
        self.start() <= t0 && t1 <= self.end()
    }

    /// Constant-rate pieces of the schedule covering `[t0, t1]`.
    pub fn rate_segments(&self, t0: T, t1: T) -> Result<Vec<RateSegment<T>>> {
        let cuts = merged_cuts(&[self.breakpoints()], t0, t1)?;
        cuts.windows(2)
            .map(|w| Ok(RateSegment { start: w[0], end: w[1], rates: self.at(w[0])?.clone() }))
            .collect()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.matrices.iter().all(|m| m.as_slice().iter().all(|v| *v == T::zero()))
    }
}

/// Contiguous, ordered classes of states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl ClassPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidInput("class sizes must be positive and non-empty".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Self { sizes, offsets })
    }

    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_classes(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_states(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn range(&self, class: usize) -> std::ops::Range<usize> {
        self.offsets[class]..self.offsets[class + 1]
    }

    pub fn class_of(&self, state: usize) -> Option<usize> {
        (state < self.n_states()).then(|| self.offsets[1..].partition_point(|&o| o <= state))
    }

    /// Position of `state` inside its class.
    pub fn member_index(&self, state: usize) -> Option<usize> {
        self.class_of(state).map(|c| state - self.offsets[c])
    }
}

/// Fast (`Q~`) and slow (`Q^`) generators together with the class structure.
/// The chain runs with `Q~(t)/eps + Q^(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleGenerator<T> {
    fast: GeneratorSchedule<T>,
    slow: GeneratorSchedule<T>,
    partition: ClassPartition,
}

impl<T: Real> TwoScaleGenerator<T> {
    pub fn new(
        fast: GeneratorSchedule<T>,
        slow: GeneratorSchedule<T>,
        partition: ClassPartition,
    ) -> Result<Self> {
        let n = partition.n_states();
        if fast.dim() != n || slow.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "partition has {n} states, fast generator {}, slow generator {}",
                fast.dim(),
                slow.dim()
            )));
        }
        for (seg, q) in fast.matrices().iter().enumerate() {
            for i in 0..n {
                let ci = partition.class_of(i).unwrap();
                for j in 0..n {
                    if partition.class_of(j).unwrap() != ci && q[(i, j)] != T::zero() {
                        return Err(Error::InvalidGenerator(format!(
                            "fast generator segment {seg} couples states {i} and {j} across classes"
                        )));
                    }
                }
            }
            for c in 0..partition.n_classes() {
                check_weak_irreducibility(&block(q, partition.range(c))).map_err(|e| {
                    relocate(e, c, seg)
                })?;
            }
        }
        if partition.n_classes() == 1 && !slow.is_identically_zero() {
            return Err(Error::InvalidGenerator(
                "single-class configuration requires a zero slow generator".into(),
            ));
        }
        Ok(Self { fast, slow, partition })
    }

    /// Single weakly irreducible class; the slow generator is zero.
    pub fn single_class(fast: GeneratorSchedule<T>) -> Result<Self> {
        let n = fast.dim();
        Self::new(fast, GeneratorSchedule::zero(n), ClassPartition::single(n)?)
    }

    /// A chain that never leaves its state.
    pub fn trivial(n: usize) -> Result<Self> {
        if n != 1 {
            return Err(Error::InvalidInput("the trivial generator has exactly one state".into()));
        }
        Self::single_class(GeneratorSchedule::zero(1))
    }

    pub fn fast(&self) -> &GeneratorSchedule<T> {
        &self.fast
    }

    pub fn slow(&self) -> &GeneratorSchedule<T> {
        &self.slow
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    pub fn n_states(&self) -> usize {
        self.partition.n_states()
    }

    /// `Q~(t)/eps + Q^(t)`.
    pub fn rate_at(&self, eps: T, t: T) -> Result<Matrix<T>> {
        Ok(self.fast.at(t)?.scale(T::one() / eps).add(self.slow.at(t)?))
    }

    /// Merged constant-rate segments of `Q^eps` covering `[t0, t1]`.
    pub fn segments(&self, eps: T, t0: T, t1: T) -> Result<Vec<RateSegment<T>>> {
        if !(eps > T::zero()) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
        }
        let cuts = merged_cuts(&[self.fast.breakpoints(), self.slow.breakpoints()], t0, t1)?;
        cuts.windows(2)
            .map(|w| Ok(RateSegment { start: w[0], end: w[1], rates: self.rate_at(eps, w[0])? }))
            .collect()
    }
}

fn relocate(e: Error, class: usize, segment: usize) -> Error {
    match e {
        Error::NotWeaklyIrreducible { detail, .. } => Error::NotWeaklyIrreducible {
            location: format!(" (class {class}, segment {segment})"),
            detail,
        },
        other => other,
    }
}

fn block<T: Real>(q: &Matrix<T>, range: std::ops::Range<usize>) -> Matrix<T> {
    let n = range.len();
    let mut b = Matrix::zeros(n, n);
    for (bi, i) in range.clone().enumerate() {
        for (bj, j) in range.clone().enumerate() {
            b[(bi, bj)] = q[(i, j)];
        }
    }
    b
}

/// Sorted union of all interior breakpoints within `[t0, t1]`, with the
/// endpoints included. Fails if some schedule does not cover the interval.
fn merged_cuts<T: Real>(lists: &[&[T]], t0: T, t1: T) -> Result<Vec<T>> {
    if !(t1 >= t0) {
        return Err(Error::InvalidInput(format!("empty horizon [{t0}, {t1}]")));
    }
    for l in lists {
        if t0 < l[0] {
            return Err(Error::ScheduleGap { t: t0.as_f64() });
        }
        if t1 > l[l.len() - 1] {
            return Err(Error::ScheduleGap { t: t1.as_f64() });
        }
    }
    let mut cuts: Vec<T> = lists
        .iter()
        .flat_map(|l| l.iter().copied())
        .filter(|&b| b > t0 && b < t1)
        .collect();
    cuts.push(t0);
    cuts.push(t1);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    Ok(cuts)
}

/// Per class and per fast-schedule segment, the distribution `nu^gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStationaryDistribution<T> {
    partition: ClassPartition,
    breakpoints: Vec<T>,
    /// `vectors[segment][class]`.
    vectors: Vec<Vec<Vec<T>>>,
}

impl<T: Real> QuasiStationaryDistribution<T> {
    /// Time-constant distribution given directly, one vector per class.
    /// Each vector must be nonnegative and sum to one.
    pub fn constant(partition: ClassPartition, per_class: Vec<Vec<T>>) -> Result<Self> {
        if per_class.len() != partition.n_classes() {
            return Err(Error::DimensionMismatch("one vector per class expected".into()));
        }
        for (c, v) in per_class.iter().enumerate() {
            if v.len() != partition.sizes()[c] {
                return Err(Error::DimensionMismatch(format!("class {c} vector length")));
            }
            let s: T = v.iter().copied().sum();
            if v.iter().any(|&x| x < T::zero()) || (s - T::one()).abs() > T::lit(1e-12) {
                return Err(Error::InvalidInput(format!("class {c} vector is not a distribution")));
            }
        }
        Ok(Self {
            partition,
            breakpoints: vec![T::neg_infinity(), T::infinity()],
            vectors: vec![per_class],
        })
    }

    pub fn partition(&self) -> &ClassPartition {
        &self.partition
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn segment_vectors(&self, segment: usize) -> &[Vec<T>] {
        &self.vectors[segment]
    }

    fn segment_index(&self, t: T) -> Result<usize> {
        let first = self.breakpoints[0];
        let last = self.breakpoints[self.breakpoints.len() - 1];
        if t.is_nan() || t < first || t > last {
            return Err(Error::ScheduleGap { t: t.as_f64() });
        }
        Ok(self.breakpoints[1..].partition_point(|&b| b <= t).min(self.vectors.len() - 1))
    }

    pub fn class_vector(&self, class: usize, t: T) -> Result<&[T]> {
        Ok(&self.vectors[self.segment_index(t)?][class])
    }

    /// `nu^gamma_Gamma(t)` for the class `gamma` containing `state`.
    pub fn state_weight(&self, state: usize, t: T) -> Result<T> {
        let class = self
            .partition
            .class_of(state)
            .ok_or_else(|| Error::InvalidInput(format!("state {state} out of range")))?;
        let member = self.partition.member_index(state).unwrap();
        Ok(self.class_vector(class, t)?[member])
    }

    /// `diag(nu_1, ..., nu_l) Q^ diag(1_{n_1}, ..., 1_{n_l})` at time `t`.
    pub fn aggregate(&self, slow: &Matrix<T>, t: T) -> Result<Matrix<T>> {
        let p = &self.partition;
        if slow.rows() != p.n_states() || !slow.is_square() {
            return Err(Error::DimensionMismatch("slow generator size".into()));
        }
        let nus = &self.vectors[self.segment_index(t)?];
        let l = p.n_classes();
        let mut out = Matrix::zeros(l, l);
        for g in 0..l {
            for (member, i) in p.range(g).enumerate() {
                let w = nus[g][member];
                for d in 0..l {
                    let row_mass: T = p.range(d).map(|j| slow[(i, j)]).sum();
                    out[(g, d)] += w * row_mass;
                }
            }
        }
        Ok(out)
    }
}

/// Quasi-stationary distributions of every class block on every segment of
/// the fast schedule.
pub fn quasi_stationary_schedule<T: Real>(
    gen: &TwoScaleGenerator<T>,
) -> Result<QuasiStationaryDistribution<T>> {
    let p = gen.partition().clone();
    let vectors = gen
        .fast()
        .matrices()
        .iter()
        .enumerate()
        .map(|(seg, q)| {
            (0..p.n_classes())
                .map(|c| check_weak_irreducibility(&block(q, p.range(c))).map_err(|e| relocate(e, c, seg)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuasiStationaryDistribution { partition: p, breakpoints: gen.fast().breakpoints().to_vec(), vectors })
}

/// Aggregated generator `Q-bar(t)` over the classes of `gen`.
pub fn aggregated_generator<T: Real>(gen: &TwoScaleGenerator<T>, t: T) -> Result<Matrix<T>> {
    let qsd = quasi_stationary_schedule(gen)?;
    qsd.aggregate(gen.slow().at(t)?, t)
}

/// `Q-bar` as a schedule over the merged breakpoints of the fast and slow
/// generators, restricted to `[t0, t1]`.
pub fn aggregated_schedule<T: Real>(
    gen: &TwoScaleGenerator<T>,
    t0: T,
    t1: T,
) -> Result<GeneratorSchedule<T>> {
    let qsd = quasi_stationary_schedule(gen)?;
    let cuts = merged_cuts(&[gen.fast().breakpoints(), gen.slow().breakpoints()], t0, t1)?;
    if cuts.len() == 1 {
        let q = qsd.aggregate(gen.slow().at(t0)?, t0)?;
        return GeneratorSchedule::piecewise(vec![t0, t1], vec![q]);
    }
    let matrices = cuts
        .windows(2)
        .map(|w| qsd.aggregate(gen.slow().at(w[0])?, w[0]))
        .collect::<Result<Vec<_>>>()?;
    GeneratorSchedule::piecewise(cuts, matrices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn hand_examples() {
        let nu = check_weak_irreducibility(&m(&[&[-1.0, 1.0], &[2.0, -2.0]])).unwrap();
        assert!((nu[0] - 2.0 / 3.0).abs() < 1e-12 && (nu[1] - 1.0 / 3.0).abs() < 1e-12);
        let nu = check_weak_irreducibility(&m(&[&[-3.0, 3.0], &[1.0, -1.0]])).unwrap();
        assert!((nu[0] - 0.25).abs() < 1e-12 && (nu[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_generator_is_rejected() {
        let e = check_weak_irreducibility(&m(&[&[0.0, 0.0], &[0.0, 0.0]])).unwrap_err();
        assert!(matches!(e, Error::NotWeaklyIrreducible { .. }), "{e}");
    }

    #[test]
    fn reducible_with_two_closed_classes_is_rejected() {
        let q = m(&[&[-1.0, 1.0, 0.0, 0.0], &[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, -2.0, 2.0], &[0.0, 0.0, 1.0, -1.0]]);
        assert!(matches!(check_weak_irreducibility(&q), Err(Error::NotWeaklyIrreducible { .. })));
    }

    #[test]
    fn transient_state_is_allowed() {
        // State 0 drains into the closed class {1, 2}; nu puts no mass on it.
        let q = m(&[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[0.0, 1.0, -1.0]]);
        let nu = check_weak_irreducibility(&q).unwrap();
        assert!(nu[0].abs() < 1e-14);
        assert!((nu[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_generators() {
        assert!(matches!(
            check_weak_irreducibility(&m(&[&[-1.0, 1.0], &[2.0, -1.0]])),
            Err(Error::InvalidGenerator(_))
        ));
        assert!(matches!(
            check_weak_irreducibility(&m(&[&[1.0, -1.0], &[2.0, -2.0]])),
            Err(Error::InvalidGenerator(_))
        ));
        assert!(matches!(
            check_weak_irreducibility(&Matrix::<f64>::zeros(2, 3)),
            Err(Error::InvalidGenerator(_))
        ));
    }

    #[test]
    fn schedule_lookup_uses_right_limits() {
        let s = GeneratorSchedule::piecewise(
            vec![0.0, 1.0, 2.0],
            vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]]), m(&[&[-2.0, 2.0], &[1.0, -1.0]])],
        )
        .unwrap();
        assert_eq!(s.segment_index(0.0).unwrap(), 0);
        assert_eq!(s.segment_index(0.999).unwrap(), 0);
        assert_eq!(s.segment_index(1.0).unwrap(), 1);
        assert_eq!(s.segment_index(2.0).unwrap(), 1);
        assert!(matches!(s.segment_index(2.5), Err(Error::ScheduleGap { .. })));
        assert!(matches!(s.segment_index(-0.1), Err(Error::ScheduleGap { .. })));
    }

    #[test]
    fn schedule_rejects_bad_breakpoints() {
        let q = m(&[&[-1.0, 1.0], &[1.0, -1.0]]);
        assert!(GeneratorSchedule::piecewise(vec![1.0, 0.0], vec![q.clone()]).is_err());
        assert!(GeneratorSchedule::piecewise(vec![0.0], vec![q]).is_err());
    }

    #[test]
    fn two_segment_qsd() {
        let fast = GeneratorSchedule::piecewise(
            vec![0.0, 1.0, 2.0],
            vec![m(&[&[-1.0, 1.0], &[2.0, -2.0]]), m(&[&[-2.0, 2.0], &[1.0, -1.0]])],
        )
        .unwrap();
        let gen = TwoScaleGenerator::single_class(fast).unwrap();
        let qsd = quasi_stationary_schedule(&gen).unwrap();
        let a = qsd.class_vector(0, 0.5).unwrap();
        let b = qsd.class_vector(0, 1.5).unwrap();
        assert!((a[0] - 2.0 / 3.0).abs() < 1e-12 && (a[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-12 && (b[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn size_one_class_has_unit_weight() {
        let fast = GeneratorSchedule::constant(
            m(&[&[-1.0, 1.0, 0.0], &[2.0, -2.0, 0.0], &[0.0, 0.0, 0.0]]),
        )
        .unwrap();
        let slow = GeneratorSchedule::constant(m(&[&[-1.0, 0.0, 1.0], &[0.0, -2.0, 2.0], &[1.0, 1.0, -2.0]])).unwrap();
        let gen = TwoScaleGenerator::new(fast, slow, ClassPartition::new(vec![2, 1]).unwrap()).unwrap();
        let qsd = quasi_stationary_schedule(&gen).unwrap();
        assert_eq!(qsd.class_vector(1, 0.0).unwrap(), &[1.0]);
        let qbar = aggregated_generator(&gen, 0.0).unwrap();
        assert!((qbar[(0, 0)] + 4.0 / 3.0).abs() < 1e-12);
        assert!((qbar[(0, 1)] - 4.0 / 3.0).abs() < 1e-12);
        assert!((qbar[(1, 0)] - 2.0).abs() < 1e-12);
        assert!((qbar[(1, 1)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_requires_zero_slow_generator() {
        let fast = GeneratorSchedule::constant(m(&[&[-1.0, 1.0], &[1.0, -1.0]])).unwrap();
        let slow = GeneratorSchedule::constant(m(&[&[-1.0, 1.0], &[1.0, -1.0]])).unwrap();
        assert!(TwoScaleGenerator::new(fast.clone(), slow, ClassPartition::single(2).unwrap()).is_err());
        let gen = TwoScaleGenerator::single_class(fast).unwrap();
        let qbar = aggregated_generator(&gen, 3.0).unwrap();
        assert_eq!(qbar.to_rows(), vec![vec![0.0]]);
    }

    #[test]
    fn fast_generator_must_be_block_diagonal() {
        let fast = GeneratorSchedule::constant(
            m(&[&[-1.0, 1.0, 0.0], &[1.0, -2.0, 1.0], &[0.0, 0.0, 0.0]]),
        )
        .unwrap();
        let r = TwoScaleGenerator::new(fast, GeneratorSchedule::zero(3), ClassPartition::new(vec![2, 1]).unwrap());
        assert!(matches!(r, Err(Error::InvalidGenerator(_))));
    }

    #[test]
    fn reducible_block_names_class_and_segment() {
        let fast = GeneratorSchedule::piecewise(
            vec![0.0, 1.0, 2.0],
            vec![m(&[&[-1.0, 1.0], &[1.0, -1.0]]), m(&[&[0.0, 0.0], &[0.0, 0.0]])],
        )
        .unwrap();
        let e = TwoScaleGenerator::single_class(fast).unwrap_err();
        assert!(e.to_string().contains("class 0, segment 1"), "{e}");
    }

    #[test]
    fn partition_lookup() {
        let p = ClassPartition::new(vec![2, 3, 1]).unwrap();
        assert_eq!(p.n_states(), 6);
        assert_eq!(p.class_of(0), Some(0));
        assert_eq!(p.class_of(1), Some(0));
        assert_eq!(p.class_of(2), Some(1));
        assert_eq!(p.class_of(4), Some(1));
        assert_eq!(p.class_of(5), Some(2));
        assert_eq!(p.class_of(6), None);
        assert_eq!(p.member_index(4), Some(2));
        assert!(ClassPartition::new(vec![2, 0]).is_err());
    }

    #[test]
    fn aggregated_schedule_follows_breakpoints() {
        let fast = GeneratorSchedule::piecewise(
            vec![0.0, 1.0, 3.0],
            vec![
                m(&[&[-1.0, 1.0, 0.0], &[2.0, -2.0, 0.0], &[0.0, 0.0, 0.0]]),
                m(&[&[-2.0, 2.0, 0.0], &[1.0, -1.0, 0.0], &[0.0, 0.0, 0.0]]),
            ],
        )
        .unwrap();
        let slow = GeneratorSchedule::constant(m(&[&[-1.0, 0.0, 1.0], &[0.0, -2.0, 2.0], &[1.0, 1.0, -2.0]])).unwrap();
        let gen = TwoScaleGenerator::new(fast, slow, ClassPartition::new(vec![2, 1]).unwrap()).unwrap();
        let s = aggregated_schedule(&gen, 0.0, 2.0).unwrap();
        assert_eq!(s.breakpoints(), &[0.0, 1.0, 2.0]);
        // nu = (1/3, 2/3) on the second segment: -(1/3 + 4/3) = -5/3.
        assert!((s.at(1.5).unwrap()[(0, 0)] + 5.0 / 3.0).abs() < 1e-12);
    }
}
