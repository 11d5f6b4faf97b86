use rayon::prelude::*;
use serde::Serialize;
use slowfast::analysis::{
    bump_gradient, modulus_check, perturbation_magnitude, switching_ergodicity_study, weak_convergence_study,
    ConvergenceSettings, PerturbationReport, PerturbationSettings,
};
use slowfast::averaging::{
    analytic_averaged, build_averaged_model, ergodicity_decay, ErgodicitySettings, GridSpec, InvariantSettings,
    XHandling,
};
use slowfast::integrator::{JumpComponent, picard_iterate, simulate_averaged, simulate_coupled, simulate_frozen_fast};
use slowfast::model::{validate_dissipativity, validate_lipschitz, SamplingSpec};
use slowfast::switching::{aggregated_schedule, quasi_stationary_schedule, TimeWeight};
use slowfast::{Averaged, Grid, Model, NoiseBundle, Path};

use crate::config::{AveragedSource, ErgodicityTarget, ExperimentConfig, Format, Observable, SimulateMode, Study};
use crate::error::{CliError, Context};
use crate::report::{num, OutputDir, Table};

pub struct Outputs<'a> {
    pub dir: &'a mut OutputDir,
    pub csv: bool,
    pub json: bool,
}

impl Outputs<'_> {
    fn table(&mut self, name: &str, t: Table) -> Result<(), CliError> {
        if self.csv {
            self.dir.write_table(name, t)?;
        }
        Ok(())
    }

    fn summary<S: Serialize>(&mut self, value: &S) -> Result<(), CliError> {
        if self.json {
            self.dir.write_json("summary.json", value)?;
        }
        Ok(())
    }
}

pub fn run(study: Study, cfg: &ExperimentConfig, model: &Model, dir: &mut OutputDir) -> Result<(), CliError> {
    let mut out = Outputs {
        dir,
        csv: cfg.run.formats.contains(&Format::Csv),
        json: cfg.run.formats.contains(&Format::Json),
    };
    match study {
        Study::Qsd => qsd(cfg, model, &mut out),
        Study::Simulate => simulate(cfg, model, &mut out),
        Study::Average => average(cfg, model, &mut out),
        Study::Converge => converge(cfg, model, &mut out),
        Study::Ergodicity => ergodicity(cfg, model, &mut out),
        Study::Modulus => modulus(cfg, model, &mut out),
        Study::Picard => picard(cfg, model, &mut out),
        Study::Perturbation => perturbation(cfg, model, &mut out),
        Study::Validate => validate(cfg, model, &mut out),
    }
}

fn grid(cfg: &ExperimentConfig) -> Result<Grid, CliError> {
    let g = &cfg.grid;
    Grid::new(g.t0_seconds, g.t_end_seconds, g.dt_seconds).map_err(|e| CliError::config("grid", e.to_string()))
}

fn invariant_settings(cfg: &ExperimentConfig) -> InvariantSettings<f64> {
    let a = &cfg.averaging;
    let mut s = InvariantSettings::new(a.n_paths, cfg.run.seed);
    s.dt = a.dt_seconds;
    s.sample_interval = a.sample_interval_seconds;
    s.burn_in = a.burn_in_seconds;
    s.horizon = a.horizon_seconds;
    s
}

fn grid_spec(cfg: &ExperimentConfig) -> GridSpec<f64> {
    let a = &cfg.averaging;
    GridSpec { lo: a.grid_lo.clone(), hi: a.grid_hi.clone(), nodes: a.grid_nodes.clone() }
}

/// The averaged model selected by `averaging.source`, with the coupled
/// model's initial data.
fn averaged(cfg: &ExperimentConfig, model: &Model) -> Result<Averaged, CliError> {
    match cfg.averaging.source {
        AveragedSource::Analytic => {
            if cfg.switching.is_some() {
                return Err(CliError::config(
                    "averaging.source",
                    "closed-form averages assume the benchmark's own switching; use `grid` or `on_demand`",
                ));
            }
            let avg = analytic_averaged(&cfg.model.benchmark).map_err(|e| CliError::config("averaging.source", e.to_string()))?;
            let class = model.switching().partition().class_of(model.r0()).unwrap_or(0);
            avg.with_initial(model.x0().to_vec(), class).context("averaged initial data")
        }
        AveragedSource::Grid => build_averaged_model(model, XHandling::Grid(grid_spec(cfg)), &invariant_settings(cfg))
            .context("building the tabulated averaged model"),
        AveragedSource::OnDemand => {
            build_averaged_model(model, XHandling::OnDemand, &invariant_settings(cfg)).context("building the averaged model")
        }
    }
}

fn io_err(name: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: name.into(), source }
}

#[derive(Serialize)]
struct QsdSegment {
    start: f64,
    end: f64,
    nu: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct AggregatedSegment {
    start: f64,
    end: f64,
    rates: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct QsdSummary {
    class_sizes: Vec<usize>,
    segments: Vec<QsdSegment>,
    aggregated: Vec<AggregatedSegment>,
}

fn qsd(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let gen = model.switching();
    let qsd = quasi_stationary_schedule(gen).context("quasi-stationary distributions")?;
    let p = gen.partition();
    let mut t = Table::new(&["segment", "start_seconds", "end_seconds", "class", "state", "nu"]);
    let mut segments = Vec::new();
    for seg in 0..qsd.segment_count() {
        let (start, end) = (qsd.breakpoints()[seg], qsd.breakpoints()[seg + 1]);
        for (c, nu) in qsd.segment_vectors(seg).iter().enumerate() {
            for (state, &v) in p.range(c).zip(nu) {
                t.row(vec![seg.to_string(), num(start), num(end), c.to_string(), state.to_string(), num(v)]);
            }
        }
        segments.push(QsdSegment { start, end, nu: qsd.segment_vectors(seg).to_vec() });
    }
    out.table("qsd.csv", t)?;

    let mut times = vec![cfg.grid.t0_seconds];
    times.extend(&cfg.qsd.times_seconds);
    let (lo, hi) = times.iter().fold((cfg.grid.t_end_seconds, cfg.grid.t_end_seconds), |(a, b), &x| (a.min(x), b.max(x)));
    let agg = aggregated_schedule(gen, lo, hi).context("aggregated generator")?;
    let mut t = Table::new(&["segment", "start_seconds", "end_seconds", "from_class", "to_class", "rate"]);
    let mut aggregated = Vec::new();
    for (seg, m) in agg.matrices().iter().enumerate() {
        let (start, end) = (agg.breakpoints()[seg], agg.breakpoints()[seg + 1]);
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                t.row(vec![seg.to_string(), num(start), num(end), i.to_string(), j.to_string(), num(m[(i, j)])]);
            }
        }
        aggregated.push(AggregatedSegment { start, end, rates: m.to_rows() });
    }
    out.table("aggregated.csv", t)?;
    out.summary(&QsdSummary { class_sizes: p.sizes().to_vec(), segments, aggregated })
}

#[derive(Serialize)]
struct SimulateSummary {
    mode: SimulateMode,
    eps: Option<f64>,
    n_paths: usize,
    seed: u64,
    terminal_x: Vec<Vec<f64>>,
    terminal_regime: Vec<usize>,
    slow_jumps: Vec<usize>,
}

fn simulate(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let s = &cfg.simulate;
    let grid = grid(cfg)?;
    let seed = cfg.run.seed;
    let avg = if s.mode == SimulateMode::Averaged { Some(averaged(cfg, model)?) } else { None };
    let x_frozen = s.x_frozen.clone().unwrap_or_else(|| model.x0().to_vec());
    let paths: Vec<Path> = (0..s.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let noise = NoiseBundle::new(seed, p);
            match s.mode {
                SimulateMode::Coupled => simulate_coupled(model, s.eps, &grid, &noise),
                SimulateMode::Frozen => simulate_frozen_fast(model, &x_frozen, s.regime, model.xi0(), &grid, &noise),
                SimulateMode::Averaged => simulate_averaged(avg.as_ref().expect("built above"), &grid, &noise),
            }
        })
        .collect::<Result<_, _>>()
        .context("simulation")?;
    let width = paths.len().saturating_sub(1).to_string().len().max(4);
    for (p, path) in paths.iter().enumerate() {
        if out.csv {
            let name = format!("path_{p:0width$}.csv");
            let mut buf = Vec::new();
            path.write_csv(&mut buf).map_err(io_err(&name))?;
            out.dir.write_bytes(&name, &buf)?;
            if !model.jumps().is_empty() {
                let name = format!("jumps_{p:0width$}.csv");
                let mut buf = Vec::new();
                path.write_jump_csv(&mut buf).map_err(io_err(&name))?;
                out.dir.write_bytes(&name, &buf)?;
            }
        }
    }
    let last = grid.steps();
    out.summary(&SimulateSummary {
        mode: s.mode,
        eps: (s.mode == SimulateMode::Coupled).then_some(s.eps),
        n_paths: s.n_paths,
        seed,
        terminal_x: paths.iter().map(|p| p.terminal_x().to_vec()).collect(),
        terminal_regime: paths.iter().map(|p| p.regime_at(last)).collect(),
        slow_jumps: paths.iter().map(|p| p.jumps().iter().filter(|e| e.component == JumpComponent::Slow).count()).collect(),
    })
}

#[derive(Serialize)]
struct AveragePoint {
    class: usize,
    x: Vec<f64>,
    drift: Vec<f64>,
    a: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct AverageSummary<B> {
    source: AveragedSource,
    n_classes: usize,
    aggregated_generator: Option<Vec<Vec<f64>>>,
    points: Vec<AveragePoint>,
    grid: Option<B>,
}

fn average(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let avg = averaged(cfg, model)?;
    let d = model.slow_dim();
    let t0 = cfg.grid.t0_seconds;
    let mut header = vec!["class".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("f_{i}")));
    for name in ["a", "sigma"] {
        for i in 1..=d {
            header.extend((1..=d).map(|j| format!("{name}_{i}{j}")));
        }
    }
    let mut t = Table::with_header(header);
    let mut points = Vec::new();
    for x in &cfg.averaging.points {
        for class in 0..avg.n_classes() {
            let p = avg.evaluate(t0, x, class).context("evaluating the averaged model")?;
            let mut row = vec![class.to_string()];
            row.extend(x.iter().chain(&p.drift).chain(p.a.as_slice()).chain(p.sigma.as_slice()).map(|&v| num(v)));
            t.row(row);
            points.push(AveragePoint { class, x: x.clone(), drift: p.drift, a: p.a.to_rows(), sigma: p.sigma.to_rows() });
        }
    }
    out.table("averaged_points.csv", t)?;
    if out.csv && avg.grid_spec().is_some() {
        let mut buf = Vec::new();
        avg.write_grid_csv(&mut buf).map_err(io_err("averaged_grid.csv"))?;
        out.dir.write_bytes("averaged_grid.csv", &buf)?;
    }
    let qbar = avg.aggregated_generator().map(|q| q.at(t0).map(|m| m.to_rows())).transpose().context("aggregated generator")?;
    out.summary(&AverageSummary {
        source: cfg.averaging.source,
        n_classes: avg.n_classes(),
        aggregated_generator: qbar,
        points,
        grid: avg.to_bundle(),
    })
}

#[derive(Serialize)]
struct Verdicts {
    strictly_decreasing: bool,
    final_within_three_floors: Option<bool>,
}

#[derive(Serialize)]
struct ConvergeSummary<R> {
    averaged_source: AveragedSource,
    verdicts: Verdicts,
    report: R,
}

fn converge(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let c = &cfg.converge;
    let avg = averaged(cfg, model)?;
    let mut settings = ConvergenceSettings::new(c.eps.clone(), cfg.grid.t_end_seconds, cfg.grid.dt_seconds, c.n_paths, cfg.run.seed);
    settings.t0 = cfg.grid.t0_seconds;
    settings.floor_replicates = c.floor_replicates;
    settings.cap_dt_at_eps = c.cap_dt_at_eps;
    let report = weak_convergence_study(model, &avg, &settings).context("weak convergence study")?;
    let mut t = Table::new(&[
        "eps", "dt_seconds", "coordinate", "w1", "ks", "noise_floor_w1", "noise_floor_ks", "floor_ratio", "slope",
        "occupation_gap",
    ]);
    for row in &report.rows {
        for i in 0..row.w1.len() {
            t.row(vec![
                num(row.eps),
                num(row.dt),
                (i + 1).to_string(),
                num(row.w1[i]),
                num(row.ks[i]),
                num(report.noise_floor_w1[i]),
                num(report.noise_floor_ks[i]),
                num(row.w1[i] / report.noise_floor_w1[i]),
                report.slope[i].map(num).unwrap_or_default(),
                num(row.occupation_gap),
            ]);
        }
    }
    out.table("convergence.csv", t)?;
    let verdicts = Verdicts {
        strictly_decreasing: report.strictly_decreasing,
        final_within_three_floors: (!report.final_floor_ratio.is_empty())
            .then(|| report.final_floor_ratio.iter().all(|&r| r <= 3.0)),
    };
    out.summary(&ConvergeSummary { averaged_source: cfg.averaging.source, verdicts, report })
}

#[derive(Serialize)]
struct DecaySummary<R> {
    bound_rate: f64,
    bound_prefactor: Option<f64>,
    bound_holds: Option<bool>,
    report: R,
}

fn ergodicity(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let e = &cfg.ergodicity;
    match e.target {
        ErgodicityTarget::Fast => {
            let x = e.x.clone().unwrap_or_else(|| model.x0().to_vec());
            let eta = e.eta.clone().unwrap_or_else(|| model.xi0().to_vec());
            let mut s = ErgodicitySettings::new(e.n_paths, cfg.run.seed);
            s.dt = e.dt_seconds;
            s.burn_in = e.burn_in_seconds;
            s.stationary_samples = e.stationary_samples;
            s.sample_interval = e.sample_interval_seconds;
            let k = e.coordinate;
            let power = match e.observable {
                Observable::Identity => 1,
                Observable::Square => 2,
            };
            let observable = move |xi: &[f64]| xi[k].powi(power);
            let report = ergodicity_decay(model, &x, e.regime, &observable, &eta, &e.times_seconds, &s)
                .context("ergodicity study")?;
            let mut t = Table::new(&["t_seconds", "deviation", "noise_floor"]);
            for ((&time, &d), &f) in report.times.iter().zip(&report.deviations).zip(&report.noise_floor) {
                t.row(vec![num(time), num(d), num(f)]);
            }
            out.table("decay.csv", t)?;
            let bound = report.exponential_bound(e.bound_rate, 1.0);
            out.summary(&DecaySummary {
                bound_rate: e.bound_rate,
                bound_prefactor: bound.map(|b| b.0),
                bound_holds: bound.map(|b| b.1),
                report,
            })
        }
        ErgodicityTarget::Switching => {
            let report = switching_ergodicity_study(
                model.switching(),
                &e.eps,
                &TimeWeight::Constant(e.beta),
                cfg.grid.t0_seconds,
                cfg.grid.t_end_seconds,
                model.r0(),
                e.n_paths,
                cfg.run.seed,
            )
            .context("switching ergodicity study")?;
            let mut t = Table::new(&["eps", "mean_square", "std_error"]);
            for r in &report.rows {
                t.row(vec![num(r.eps), num(r.mean_square), num(r.std_error)]);
            }
            out.table("switching_ergodicity.csv", t)?;
            out.summary(&report)
        }
    }
}

fn modulus(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let m = &cfg.modulus;
    let report = modulus_check(model, m.eps, cfg.grid.dt_seconds, m.anchor_seconds, &m.taus_seconds, m.n_paths, cfg.run.seed)
        .context("modulus check")?;
    let mut t = Table::new(&["tau_seconds", "moment", "std_error"]);
    for ((&tau, &v), &se) in report.taus.iter().zip(&report.moments).zip(&report.std_errors) {
        t.row(vec![num(tau), num(v), num(se)]);
    }
    out.table("modulus.csv", t)?;
    out.summary(&report)
}

#[derive(Serialize)]
struct PicardSummary {
    eps: f64,
    regime: usize,
    seed: u64,
    deltas: Vec<f64>,
    /// First iterate after which every ratio stays below one.
    contracting_from: Option<usize>,
}

fn picard(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.picard;
    let grid = grid(cfg)?;
    let report = picard_iterate(model, p.regime, p.eps, &grid, &NoiseBundle::new(cfg.run.seed, 0), p.iterations)
        .context("Picard iteration")?;
    let mut t = Table::new(&["n", "delta", "ratio"]);
    let mut ratios = Vec::new();
    for (n, &d) in report.deltas.iter().enumerate() {
        let ratio = if n == 0 { f64::NAN } else { d / report.deltas[n - 1] };
        ratios.push(ratio);
        t.row(vec![n.to_string(), num(d), if n == 0 { String::new() } else { num(ratio) }]);
    }
    out.table("picard.csv", t)?;
    let contracting_from = (1..ratios.len()).find(|&n| ratios[n..].iter().all(|&r| r < 1.0 || r.is_nan()));
    out.summary(&PicardSummary {
        eps: p.eps,
        regime: p.regime,
        seed: cfg.run.seed,
        deltas: report.deltas,
        contracting_from,
    })
}

#[derive(Serialize)]
struct PerturbationSummary {
    averaged_source: AveragedSource,
    /// Last estimate divided by the first.
    ratio: Option<f64>,
    reports: Vec<PerturbationReport<f64>>,
}

fn perturbation(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let p = &cfg.perturbation;
    let avg = averaged(cfg, model)?;
    let center = p.bump_center.clone();
    let radius = p.bump_radius;
    let grad = move |x: &[f64], o: &mut [f64]| bump_gradient(&center, radius, x, o);
    let reports = p
        .eps
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let mut s = PerturbationSettings::new(eps, p.t_points_seconds.clone(), cfg.grid.t_end_seconds, p.n_outer, p.n_inner, slowfast::rng::derive_seed(cfg.run.seed, k as u64));
            s.dt = cfg.grid.dt_seconds;
            s.inner_fast_dt = p.inner_fast_dt;
            s.budget_cap = p.budget_cap;
            perturbation_magnitude(model, &avg, &grad, &s).context("perturbation diagnostic")
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&["eps", "t_seconds", "mean_abs"]);
    for r in &reports {
        for (&time, &v) in r.t_points.iter().zip(&r.mean_abs) {
            t.row(vec![num(r.eps), num(time), num(v)]);
        }
    }
    out.table("perturbation.csv", t)?;
    let mut t = Table::new(&["eps", "sup_estimate", "sup_std_error", "inner_noise_floor"]);
    for r in &reports {
        t.row(vec![num(r.eps), num(r.sup_estimate), num(r.sup_std_error), num(r.inner_noise_floor)]);
    }
    out.table("perturbation_sup.csv", t)?;
    let ratio = match (reports.first(), reports.last()) {
        (Some(a), Some(b)) if reports.len() > 1 => Some(b.sup_estimate / a.sup_estimate),
        _ => None,
    };
    out.summary(&PerturbationSummary { averaged_source: cfg.averaging.source, ratio, reports })
}

#[derive(Serialize)]
struct ValidateSummary<L, D> {
    lipschitz: L,
    dissipativity: Vec<D>,
}

fn validate(cfg: &ExperimentConfig, model: &Model, out: &mut Outputs) -> Result<(), CliError> {
    let v = &cfg.validate;
    let spec = SamplingSpec {
        x_lo: v.x_lo.clone(),
        x_hi: v.x_hi.clone(),
        xi_lo: v.xi_lo.clone(),
        xi_hi: v.xi_hi.clone(),
        pairs: v.pairs,
        seed: cfg.run.seed,
    };
    let lipschitz = validate_lipschitz(model, &spec, v.declared_lipschitz.as_deref()).context("Lipschitz check")?;
    let mut t = Table::new(&["regime", "max_ratio", "declared", "exceedances", "pass"]);
    for r in &lipschitz.regimes {
        t.row(vec![
            r.regime.to_string(),
            num(r.max_ratio),
            r.declared.map(num).unwrap_or_default(),
            r.exceedances.to_string(),
            r.pass.map(|b| b.to_string()).unwrap_or_default(),
        ]);
    }
    out.table("lipschitz.csv", t)?;
    let points = if v.frozen_points.is_empty() { vec![model.x0().to_vec()] } else { v.frozen_points.clone() };
    let d = model.slow_dim();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    for h in ["regime", "alpha1", "alpha2", "alpha3", "margin", "alpha", "growth_margin", "pass"] {
        header.push(h.into());
    }
    let mut t = Table::with_header(header);
    let mut dissipativity = Vec::new();
    for x in &points {
        for regime in 0..model.coefficients().regimes() {
            let c = validate_dissipativity(model, x, regime, &spec).context("dissipativity check")?;
            let mut row: Vec<String> = x.iter().map(|&v| num(v)).collect();
            row.push(regime.to_string());
            row.extend([c.alpha1, c.alpha2, c.alpha3, c.margin, c.alpha, c.growth_margin].map(num));
            row.push(c.pass.to_string());
            t.row(row);
            dissipativity.push(c);
        }
    }
    out.table("dissipativity.csv", t)?;
    out.summary(&ValidateSummary { lipschitz, dissipativity })
}
