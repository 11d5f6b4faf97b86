use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coefficient::{psd_root, WeightedMean};
use super::invariant::{estimate_invariant_measure, InvariantMeasureEstimate, InvariantSettings};
use crate::error::{Error, Result};
use crate::integrator::{AveragedDynamics, SlowField};
use crate::linalg::Matrix;
use crate::model::{JumpMeasure, SlowFastModel};
use crate::real::{format_round_trip, Real, RunningMean};
use crate::switching::{aggregated_schedule, quasi_stationary_schedule, GeneratorSchedule};

/// `f_bar(t, x, class, out)`.
pub type AveragedVectorFn<T> = Arc<dyn Fn(T, &[T], usize, &mut [T]) + Send + Sync>;
/// `a_bar(t, x, class, out)`.
pub type AveragedMatrixFn<T> = Arc<dyn Fn(T, &[T], usize, &mut Matrix<T>) + Send + Sync>;
/// `g_bar(t, x, class, z, out)`.
pub type AveragedJumpFn<T> = Arc<dyn Fn(T, &[T], usize, &[T], &mut [T]) + Send + Sync>;

/// Averaged coefficients supplied in closed form. Unset entries are zero.
#[derive(Clone, Default)]
pub struct ClosedForm<T> {
    drift: Option<AveragedVectorFn<T>>,
    diffusion: Option<AveragedMatrixFn<T>>,
    jump: Option<AveragedJumpFn<T>>,
}

impl<T: Real> ClosedForm<T> {
    pub fn new() -> Self {
        Self { drift: None, diffusion: None, jump: None }
    }

    pub fn with_drift(mut self, f: impl Fn(T, &[T], usize, &mut [T]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    /// Sets `a_bar`; the integrator uses its PSD square root.
    pub fn with_diffusion(mut self, f: impl Fn(T, &[T], usize, &mut Matrix<T>) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn with_jump(mut self, f: impl Fn(T, &[T], usize, &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.jump = Some(Arc::new(f));
        self
    }
}

/// Box and per-axis node counts of a tabulated averaged model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
    pub nodes: Vec<usize>,
}

impl<T: Real> GridSpec<T> {
    fn check(&self, d: usize) -> Result<()> {
        if self.lo.len() != d || self.hi.len() != d || self.nodes.len() != d {
            return Err(Error::DimensionMismatch(format!("grid box must have {d} axes")));
        }
        for i in 0..d {
            if !(self.hi[i] > self.lo[i]) || self.nodes[i] < 2 {
                return Err(Error::InvalidInput(format!(
                    "grid axis {i} needs hi > lo and at least two nodes"
                )));
            }
        }
        Ok(())
    }

    fn total(&self) -> usize {
        self.nodes.iter().product()
    }

    fn step(&self, i: usize) -> T {
        (self.hi[i] - self.lo[i]) / T::from_usize_lossy(self.nodes[i] - 1)
    }

    pub fn axis(&self, i: usize) -> Vec<T> {
        (0..self.nodes[i]).map(|k| self.coordinate(i, k)).collect()
    }

    fn coordinate(&self, i: usize, k: usize) -> T {
        if k + 1 == self.nodes[i] {
            self.hi[i]
        } else {
            self.lo[i] + T::from_usize_lossy(k) * self.step(i)
        }
    }

    /// Coordinates of flat node `n` (first axis fastest).
    fn point(&self, mut n: usize) -> Vec<T> {
        (0..self.nodes.len())
            .map(|i| {
                let k = n % self.nodes[i];
                n /= self.nodes[i];
                self.coordinate(i, k)
            })
            .collect()
    }
}

/// How `x` is handled when building an averaged model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum XHandling<T> {
    /// Evaluate the Monte Carlo averages at each queried `x`, with common
    /// random numbers across queries.
    OnDemand,
    /// Tabulate on a grid and interpolate multilinearly; queries outside the
    /// box are errors.
    Grid(GridSpec<T>),
}

/// Seeds and sample sizes behind an estimated averaged model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance<T> {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: T,
    pub sample_interval: T,
    pub burn_in: Option<T>,
    pub horizon: Option<T>,
}

/// Averaged quantities at one `(t, x, class)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedPoint<T> {
    pub drift: Vec<T>,
    pub a: Matrix<T>,
    pub sigma: Matrix<T>,
    /// `sum_i w_i G_bar(x, z_i)`.
    pub jump_integral: Matrix<T>,
    /// `g_bar(x, z_i)` per atom.
    pub g_bar: Vec<Vec<T>>,
}

struct GridTable<T> {
    spec: GridSpec<T>,
    strides: Vec<usize>,
    values: Vec<T>,
}

#[derive(Clone)]
enum Representation<T> {
    ClosedForm(ClosedForm<T>),
    OnDemand { model: Box<SlowFastModel<T>>, settings: InvariantSettings<T> },
    Grid(Arc<GridTable<T>>),
}

/// Averaged slow dynamics: coefficients indexed by class, the aggregated
/// generator in the multi-class case, and initial data.
#[derive(Clone)]
pub struct AveragedModel<T> {
    slow_dim: usize,
    n_classes: usize,
    jumps: JumpMeasure<T>,
    x0: Vec<T>,
    r0: usize,
    qbar: Option<GeneratorSchedule<T>>,
    /// Quasi-stationary breakpoints; `weights[piece][class]` holds
    /// `(state, nu)` pairs valid on `[breakpoints[piece], breakpoints[piece + 1])`.
    breakpoints: Vec<T>,
    weights: Vec<Vec<Vec<(usize, T)>>>,
    has_noise: bool,
    has_jumps: bool,
    provenance: Option<Provenance<T>>,
    repr: Representation<T>,
}

impl<T: fmt::Debug> fmt::Debug for AveragedModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Representation::ClosedForm(_) => "closed_form",
            Representation::OnDemand { .. } => "on_demand",
            Representation::Grid(_) => "grid",
        };
        f.debug_struct("AveragedModel")
            .field("slow_dim", &self.slow_dim)
            .field("n_classes", &self.n_classes)
            .field("x0", &self.x0)
            .field("r0", &self.r0)
            .field("qbar", &self.qbar)
            .field("representation", &kind)
            .finish()
    }
}

/// Offsets inside one tabulated record.
struct Layout {
    d: usize,
    atoms: usize,
}

impl Layout {
    fn drift(&self) -> usize {
        0
    }
    fn a(&self) -> usize {
        self.d
    }
    fn jump_integral(&self) -> usize {
        self.d + self.d * self.d
    }
    fn g_mean(&self, atom: usize) -> usize {
        self.d + 2 * self.d * self.d + 2 * atom * self.d
    }
    fn g_second(&self, atom: usize) -> usize {
        self.g_mean(atom) + self.d
    }
    fn len(&self) -> usize {
        self.d + 2 * self.d * self.d + 2 * self.atoms * self.d
    }
}

/// Averages of all slow coefficients of `model` over `measure` for one class.
fn record<T: Real>(
    model: &SlowFastModel<T>,
    x: &[T],
    weights: &[(usize, T)],
    measure: &InvariantMeasureEstimate<T>,
) -> Vec<T> {
    let d = model.slow_dim();
    let layout = Layout { d, atoms: model.jumps().len() };
    let c = model.coefficients();
    let mut combined = WeightedMean::new(layout.len());
    let mut means = vec![RunningMean::new(); layout.len()];
    let mut sample = vec![T::zero(); layout.len()];
    let mut f = vec![T::zero(); d];
    let mut g = vec![T::zero(); d];
    for &(regime, w) in weights {
        means.iter_mut().for_each(|m| *m = RunningMean::new());
        for xi in measure.samples() {
            c.drift(x, regime, xi, &mut f);
            sample[..d].copy_from_slice(&f);
            let a = model.diffusion_matrix(x, regime, xi);
            sample[layout.a()..layout.a() + d * d].copy_from_slice(a.as_slice());
            let ji = layout.jump_integral();
            sample[ji..ji + d * d].fill(T::zero());
            for (atom, (z, wz)) in model.jumps().iter().enumerate() {
                c.jump(x, regime, xi, z, &mut g);
                for i in 0..d {
                    sample[ji + i * d + i] += wz * g[i] * g[i];
                    sample[layout.g_mean(atom) + i] = g[i];
                    sample[layout.g_second(atom) + i] = g[i] * g[i];
                }
            }
            for (m, &v) in means.iter_mut().zip(&sample) {
                m.push(v);
            }
        }
        let regime_mean: Vec<T> = means.iter().map(RunningMean::mean).collect();
        combined.push(w, &regime_mean);
    }
    combined.into_inner()
}

fn point_from_record<T: Real>(rec: &[T], layout: &Layout) -> Result<AveragedPoint<T>> {
    let d = layout.d;
    let a = Matrix::from_row_major(d, d, rec[layout.a()..layout.a() + d * d].to_vec()).expect("square");
    let ji = layout.jump_integral();
    Ok(AveragedPoint {
        drift: rec[..d].to_vec(),
        sigma: psd_root(&a)?,
        a,
        jump_integral: Matrix::from_row_major(d, d, rec[ji..ji + d * d].to_vec()).expect("square"),
        g_bar: (0..layout.atoms).map(|atom| g_bar(rec, layout, atom)).collect(),
    })
}

/// Sign of the weighted mean of `g` times the root of the weighted mean of
/// `g^2`, per component.
fn g_bar<T: Real>(rec: &[T], layout: &Layout, atom: usize) -> Vec<T> {
    (0..layout.d)
        .map(|i| {
            let mean = rec[layout.g_mean(atom) + i];
            let root = rec[layout.g_second(atom) + i].max(T::zero()).sqrt();
            if mean < T::zero() {
                -root
            } else {
                root
            }
        })
        .collect()
}

impl<T: Real> GridTable<T> {
    fn build(spec: GridSpec<T>, values: Vec<T>) -> Self {
        let mut strides = Vec::with_capacity(spec.nodes.len());
        let mut s = 1;
        for &n in &spec.nodes {
            strides.push(s);
            s *= n;
        }
        Self { spec, strides, values }
    }

    /// Multilinear interpolation of `len` values at `offset` of the records
    /// of block `block`.
    fn interpolate(&self, block: usize, record: usize, x: &[T], offset: usize, out: &mut [T]) -> Result<()> {
        let d = x.len();
        let mut base = 0;
        let mut fracs = Vec::with_capacity(d);
        for i in 0..d {
            let h = self.spec.step(i);
            let tol = T::lit(1e-9) * h;
            if !(x[i] >= self.spec.lo[i] - tol && x[i] <= self.spec.hi[i] + tol) {
                return Err(Error::GridExtrapolation { x: x.iter().map(|v| v.as_f64()).collect() });
            }
            let u = ((x[i] - self.spec.lo[i]) / h).max(T::zero());
            let cell = u.floor().to_usize().unwrap_or(0).min(self.spec.nodes[i] - 2);
            fracs.push((u - T::from_usize_lossy(cell)).min(T::one()));
            base += cell * self.strides[i];
        }
        out.fill(T::zero());
        let nodes = self.spec.total();
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            let mut node = base;
            for (i, &f) in fracs.iter().enumerate() {
                if corner >> i & 1 == 1 {
                    w *= f;
                    node += self.strides[i];
                } else {
                    w *= T::one() - f;
                }
            }
            if w == T::zero() {
                continue;
            }
            let start = (block * nodes + node) * record + offset;
            let len = out.len();
            for (o, &v) in out.iter_mut().zip(&self.values[start..start + len]) {
                *o += w * v;
            }
        }
        Ok(())
    }
}

impl<T: Real> AveragedModel<T> {
    /// Averaged model from closed-form coefficients. `qbar` is required when
    /// `n_classes > 1`.
    pub fn closed_form(
        slow_dim: usize,
        n_classes: usize,
        jumps: JumpMeasure<T>,
        x0: Vec<T>,
        r0: usize,
        qbar: Option<GeneratorSchedule<T>>,
        coefficients: ClosedForm<T>,
    ) -> Result<Self> {
        if x0.len() != slow_dim {
            return Err(Error::DimensionMismatch("averaged initial state".into()));
        }
        if r0 >= n_classes {
            return Err(Error::InvalidInput(format!("initial class {r0} out of range")));
        }
        match &qbar {
            Some(q) if q.dim() != n_classes => {
                return Err(Error::DimensionMismatch("aggregated generator size".into()))
            }
            None if n_classes > 1 => {
                return Err(Error::InvalidInput("multi-class averaged model needs an aggregated generator".into()))
            }
            _ => {}
        }
        Ok(Self {
            slow_dim,
            n_classes,
            has_noise: coefficients.diffusion.is_some(),
            has_jumps: coefficients.jump.is_some() && !jumps.is_empty(),
            jumps,
            x0,
            r0,
            qbar,
            breakpoints: vec![T::neg_infinity(), T::infinity()],
            weights: Vec::new(),
            provenance: None,
            repr: Representation::ClosedForm(coefficients),
        })
    }

    pub fn slow_dim(&self) -> usize {
        self.slow_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn r0(&self) -> usize {
        self.r0
    }

    pub fn jumps(&self) -> &JumpMeasure<T> {
        &self.jumps
    }

    /// `Q-bar`, present in the multi-class case.
    pub fn aggregated_generator(&self) -> Option<&GeneratorSchedule<T>> {
        self.qbar.as_ref()
    }

    pub fn provenance(&self) -> Option<&Provenance<T>> {
        self.provenance.as_ref()
    }

    pub fn grid_spec(&self) -> Option<&GridSpec<T>> {
        match &self.repr {
            Representation::Grid(g) => Some(&g.spec),
            _ => None,
        }
    }

    pub fn with_initial(mut self, x0: Vec<T>, r0: usize) -> Result<Self> {
        if x0.len() != self.slow_dim || r0 >= self.n_classes {
            return Err(Error::InvalidInput("averaged initial data out of range".into()));
        }
        self.x0 = x0;
        self.r0 = r0;
        Ok(self)
    }

    fn piece(&self, t: T) -> usize {
        self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1).min(self.weights.len().saturating_sub(1))
    }

    fn layout(&self) -> Layout {
        Layout { d: self.slow_dim, atoms: self.jumps.len() }
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.n_classes {
            return Err(Error::InvalidInput(format!("class {class} out of range")));
        }
        Ok(())
    }

    /// All averaged quantities at `(t, x, class)`.
    pub fn evaluate(&self, t: T, x: &[T], class: usize) -> Result<AveragedPoint<T>> {
        self.check_class(class)?;
        if x.len() != self.slow_dim {
            return Err(Error::DimensionMismatch("query point".into()));
        }
        let d = self.slow_dim;
        match &self.repr {
            Representation::ClosedForm(cf) => {
                let mut drift = vec![T::zero(); d];
                if let Some(f) = &cf.drift {
                    f(t, x, class, &mut drift);
                }
                let mut a = Matrix::zeros(d, d);
                if let Some(f) = &cf.diffusion {
                    f(t, x, class, &mut a);
                }
                let mut g_bar = Vec::with_capacity(self.jumps.len());
                let mut jump_integral = Matrix::zeros(d, d);
                for (z, w) in self.jumps.iter() {
                    let mut g = vec![T::zero(); d];
                    if let Some(f) = &cf.jump {
                        f(t, x, class, z, &mut g);
                    }
                    for i in 0..d {
                        jump_integral[(i, i)] += w * g[i] * g[i];
                    }
                    g_bar.push(g);
                }
                Ok(AveragedPoint { drift, sigma: psd_root(&a)?, a, jump_integral, g_bar })
            }
            Representation::OnDemand { model, settings } => {
                let measure = estimate_invariant_measure(model, x, 0, settings)?;
                let rec = record(model, x, &self.weights[self.piece(t)][class], &measure);
                point_from_record(&rec, &self.layout())
            }
            Representation::Grid(table) => {
                let layout = self.layout();
                let mut rec = vec![T::zero(); layout.len()];
                table.interpolate(self.piece(t) * self.n_classes + class, layout.len(), x, 0, &mut rec)?;
                point_from_record(&rec, &layout)
            }
        }
    }

    /// Tabulated nodes as a serialisable bundle; `None` unless grid-based.
    pub fn to_bundle(&self) -> Option<GridBundle<T>> {
        let Representation::Grid(table) = &self.repr else { return None };
        let layout = self.layout();
        let d = self.slow_dim;
        let n_nodes = table.spec.total();
        let mut records = Vec::new();
        for piece in 0..self.weights.len() {
            for class in 0..self.n_classes {
                for node in 0..n_nodes {
                    let start = ((piece * self.n_classes + class) * n_nodes + node) * layout.len();
                    let rec = &table.values[start..start + layout.len()];
                    records.push(GridRecord {
                        piece,
                        class,
                        x: table.spec.point(node),
                        drift: rec[..d].to_vec(),
                        a: rec[layout.a()..layout.a() + d * d].to_vec(),
                        jump_integral: rec[layout.jump_integral()..layout.jump_integral() + d * d].to_vec(),
                        g_bar: (0..layout.atoms).map(|atom| g_bar(rec, &layout, atom)).collect(),
                    });
                }
            }
        }
        let finite = |b: &[T]| b.iter().copied().filter(|v| v.is_finite()).collect::<Vec<_>>();
        Some(GridBundle {
            slow_dim: d,
            n_classes: self.n_classes,
            axes: (0..d).map(|i| table.spec.axis(i)).collect(),
            piece_breakpoints: finite(&self.breakpoints),
            atoms: self.jumps.iter().map(|(z, w)| (z.to_vec(), w)).collect(),
            aggregated_generator: self.qbar.as_ref().map(|q| AggregatedSchedule {
                breakpoints: finite(q.breakpoints()),
                matrices: q.matrices().iter().map(Matrix::to_rows).collect(),
            }),
            provenance: self.provenance.clone(),
            records,
        })
    }

    /// Long-format table `piece, class, x_.., f_.., a_.., J_..` of a grid
    /// model. Fails for models that are not grid-based.
    pub fn write_grid_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let bundle = self
            .to_bundle()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "averaged model is not tabulated"))?;
        let d = self.slow_dim;
        let mut header = vec!["piece".to_string(), "class".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=d).map(|i| format!("f_{i}")));
        for prefix in ["a", "J"] {
            for i in 1..=d {
                header.extend((1..=d).map(|j| format!("{prefix}_{i}{j}")));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for r in &bundle.records {
            let mut row = vec![r.piece.to_string(), r.class.to_string()];
            for v in r.x.iter().chain(&r.drift).chain(&r.a).chain(&r.jump_integral) {
                row.push(format_round_trip(*v));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Serialisable form of a tabulated averaged model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBundle<T> {
    pub slow_dim: usize,
    pub n_classes: usize,
    pub axes: Vec<Vec<T>>,
    /// Interior breakpoints of the quasi-stationary schedule.
    pub piece_breakpoints: Vec<T>,
    pub atoms: Vec<(Vec<T>, T)>,
    pub aggregated_generator: Option<AggregatedSchedule<T>>,
    pub provenance: Option<Provenance<T>>,
    pub records: Vec<GridRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSchedule<T> {
    pub breakpoints: Vec<T>,
    pub matrices: Vec<Vec<Vec<T>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord<T> {
    pub piece: usize,
    pub class: usize,
    pub x: Vec<T>,
    pub drift: Vec<T>,
    /// Row-major `a_bar`.
    pub a: Vec<T>,
    /// Row-major `sum_i w_i G_bar(x, z_i)`.
    pub jump_integral: Vec<T>,
    pub g_bar: Vec<Vec<T>>,
}

/// Builds the averaged model of `model`: `f_bar`, `a_bar` (with root
/// `sigma_bar`), per-atom `g_bar`, and `Q-bar` when there are several classes.
pub fn build_averaged_model<T: Real>(
    model: &SlowFastModel<T>,
    handling: XHandling<T>,
    settings: &InvariantSettings<T>,
) -> Result<AveragedModel<T>> {
    let gen = model.switching();
    let qsd = quasi_stationary_schedule(gen)?;
    let partition = gen.partition();
    let n_classes = partition.n_classes();
    let weights: Vec<Vec<Vec<(usize, T)>>> = (0..qsd.segment_count())
        .map(|seg| {
            qsd.segment_vectors(seg)
                .iter()
                .enumerate()
                .map(|(c, nu)| partition.range(c).zip(nu.iter().copied()).collect())
                .collect()
        })
        .collect();
    let qbar = if n_classes > 1 {
        let start = gen.fast().start().max(gen.slow().start());
        let end = gen.fast().end().min(gen.slow().end());
        Some(aggregated_schedule(gen, start, end)?)
    } else {
        None
    };
    let c = model.coefficients();
    let d = model.slow_dim();
    let layout = Layout { d, atoms: model.jumps().len() };
    let repr = match handling {
        XHandling::OnDemand => Representation::OnDemand { model: Box::new(model.clone()), settings: settings.clone() },
        XHandling::Grid(spec) => {
            spec.check(d)?;
            let n_nodes = spec.total();
            let per_node: Vec<Vec<Vec<T>>> = (0..n_nodes)
                .into_par_iter()
                .map(|node| {
                    let x = spec.point(node);
                    let measure = estimate_invariant_measure(model, &x, 0, settings)?;
                    Ok(weights
                        .iter()
                        .flat_map(|piece| piece.iter().map(|w| record(model, &x, w, &measure)))
                        .collect())
                })
                .collect::<Result<_>>()?;
            let blocks = weights.len() * n_classes;
            let mut values = Vec::with_capacity(blocks * n_nodes * layout.len());
            for block in 0..blocks {
                for node_records in &per_node {
                    values.extend_from_slice(&node_records[block]);
                }
            }
            Representation::Grid(Arc::new(GridTable::build(spec, values)))
        }
    };
    let r0 = partition.class_of(model.r0()).expect("initial state inside the partition");
    Ok(AveragedModel {
        slow_dim: d,
        n_classes,
        jumps: model.jumps().clone(),
        x0: model.x0().to_vec(),
        r0,
        qbar,
        breakpoints: qsd.breakpoints().to_vec(),
        weights,
        has_noise: c.has_slow_noise(),
        has_jumps: c.has_slow_jump() && !model.jumps().is_empty(),
        provenance: Some(Provenance {
            seed: settings.seed,
            n_paths: settings.n_paths,
            dt: settings.dt,
            sample_interval: settings.sample_interval,
            burn_in: settings.burn_in,
            horizon: settings.horizon,
        }),
        repr,
    })
}

impl<T: Real> SlowField<T> for AveragedModel<T> {
    fn slow_dim(&self) -> usize {
        self.slow_dim
    }

    fn jump_measure(&self) -> &JumpMeasure<T> {
        &self.jumps
    }

    fn has_noise(&self) -> bool {
        self.has_noise
    }

    fn has_jumps(&self) -> bool {
        self.has_jumps
    }

    fn drift(&self, t: T, x: &[T], class: usize, _xi: &[T], out: &mut [T]) -> Result<()> {
        match &self.repr {
            Representation::ClosedForm(cf) => {
                out.fill(T::zero());
                if let Some(f) = &cf.drift {
                    f(t, x, class, out);
                }
                Ok(())
            }
            Representation::Grid(table) => {
                let layout = self.layout();
                let block = self.piece(t) * self.n_classes + class;
                table.interpolate(block, layout.len(), x, layout.drift(), out)
            }
            Representation::OnDemand { .. } => {
                out.copy_from_slice(&self.evaluate(t, x, class)?.drift);
                Ok(())
            }
        }
    }

    fn diffusion(&self, t: T, x: &[T], class: usize, _xi: &[T], out: &mut Matrix<T>) -> Result<()> {
        let d = self.slow_dim;
        let a = match &self.repr {
            Representation::ClosedForm(cf) => {
                let mut a = Matrix::zeros(d, d);
                if let Some(f) = &cf.diffusion {
                    f(t, x, class, &mut a);
                }
                a
            }
            Representation::Grid(table) => {
                let layout = self.layout();
                let mut v = vec![T::zero(); d * d];
                table.interpolate(self.piece(t) * self.n_classes + class, layout.len(), x, layout.a(), &mut v)?;
                Matrix::from_row_major(d, d, v).expect("square")
            }
            Representation::OnDemand { .. } => self.evaluate(t, x, class)?.a,
        };
        *out = psd_root(&a)?;
        Ok(())
    }

    fn jump(&self, t: T, x: &[T], class: usize, _xi: &[T], atom: usize, out: &mut [T]) -> Result<()> {
        match &self.repr {
            Representation::ClosedForm(cf) => {
                out.fill(T::zero());
                if let Some(f) = &cf.jump {
                    f(t, x, class, self.jumps.atom(atom), out);
                }
                Ok(())
            }
            Representation::Grid(table) => {
                let layout = self.layout();
                let block = self.piece(t) * self.n_classes + class;
                let mut buf = vec![T::zero(); layout.len()];
                table.interpolate(block, layout.len(), x, 0, &mut buf)?;
                out.copy_from_slice(&g_bar(&buf, &layout, atom));
                Ok(())
            }
            Representation::OnDemand { .. } => {
                out.copy_from_slice(&self.evaluate(t, x, class)?.g_bar[atom]);
                Ok(())
            }
        }
    }
}

impl<T: Real> AveragedDynamics<T> for AveragedModel<T> {
    fn initial_state(&self) -> &[T] {
        &self.x0
    }

    fn initial_regime(&self) -> usize {
        self.r0
    }

    fn regime_generator(&self) -> Option<&GeneratorSchedule<T>> {
        self.qbar.as_ref()
    }
}
