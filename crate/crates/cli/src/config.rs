use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use slowfast::model::benchmarks;
use slowfast::switching::{ClassPartition, GeneratorSchedule, TwoScaleGenerator};
use slowfast::{Matrix, Model};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Qsd,
    Simulate,
    Average,
    Converge,
    Ergodicity,
    Modulus,
    Picard,
    Perturbation,
    Validate,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Qsd => "qsd",
            Study::Simulate => "simulate",
            Study::Average => "average",
            Study::Converge => "converge",
            Study::Ergodicity => "ergodicity",
            Study::Modulus => "modulus",
            Study::Picard => "picard",
            Study::Perturbation => "perturbation",
            Study::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    pub study: Option<Study>,
    pub model: ModelConfig,
    pub switching: Option<SwitchingConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub averaging: AveragingConfig,
    #[serde(default)]
    pub qsd: QsdConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub ergodicity: ErgodicityConfig,
    #[serde(default)]
    pub modulus: ModulusConfig,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Registry name of a built-in benchmark.
    pub benchmark: String,
    pub x0: Option<Vec<f64>>,
    pub xi0: Option<Vec<f64>>,
    pub r0: Option<usize>,
}

/// Replaces the benchmark's switching. `fast` and `slow` hold one generator
/// per segment of `breakpoints_seconds`; without breakpoints a single
/// time-homogeneous segment is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    pub classes: Option<Vec<usize>>,
    pub breakpoints_seconds: Option<Vec<f64>>,
    pub fast: Vec<Vec<Vec<f64>>>,
    pub slow: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub t0_seconds: f64,
    pub t_end_seconds: f64,
    pub dt_seconds: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { t0_seconds: 0.0, t_end_seconds: 1.0, dt_seconds: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 0, jobs: 0, output_dir: None, formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragedSource {
    /// Closed-form averaged benchmark.
    Analytic,
    /// Monte Carlo averages tabulated on a grid.
    Grid,
    /// Monte Carlo averages at every queried point.
    OnDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingConfig {
    pub source: AveragedSource,
    pub n_paths: usize,
    pub dt_seconds: f64,
    pub sample_interval_seconds: f64,
    pub burn_in_seconds: Option<f64>,
    pub horizon_seconds: Option<f64>,
    pub grid_lo: Vec<f64>,
    pub grid_hi: Vec<f64>,
    pub grid_nodes: Vec<usize>,
    /// Points at which the `average` study reports the averaged coefficients.
    pub points: Vec<Vec<f64>>,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            source: AveragedSource::Analytic,
            n_paths: 200,
            dt_seconds: 0.01,
            sample_interval_seconds: 1.0,
            burn_in_seconds: None,
            horizon_seconds: None,
            grid_lo: vec![-2.0],
            grid_hi: vec![2.0],
            grid_nodes: vec![9],
            points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QsdConfig {
    /// Times at which the aggregated generator is listed.
    pub times_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateMode {
    Coupled,
    Frozen,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub mode: SimulateMode,
    pub eps: f64,
    pub n_paths: usize,
    pub x_frozen: Option<Vec<f64>>,
    pub regime: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { mode: SimulateMode::Coupled, eps: 0.01, n_paths: 1, x_frozen: None, regime: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub eps: Vec<f64>,
    pub n_paths: usize,
    pub floor_replicates: usize,
    pub cap_dt_at_eps: bool,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self { eps: vec![0.1, 0.01, 0.001], n_paths: 10_000, floor_replicates: 4, cap_dt_at_eps: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErgodicityTarget {
    /// Decay of the frozen fast process towards its invariant law.
    Fast,
    /// Occupation deviations of the switching chain.
    Switching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Identity,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicityConfig {
    pub target: ErgodicityTarget,
    pub n_paths: usize,
    pub x: Option<Vec<f64>>,
    pub regime: usize,
    pub eta: Option<Vec<f64>>,
    pub times_seconds: Vec<f64>,
    pub dt_seconds: f64,
    pub burn_in_seconds: Option<f64>,
    pub stationary_samples: usize,
    pub sample_interval_seconds: f64,
    pub observable: Observable,
    pub coordinate: usize,
    /// Rate used for the exponential-bound verdict.
    pub bound_rate: f64,
    pub eps: Vec<f64>,
    pub beta: f64,
}

impl Default for ErgodicityConfig {
    fn default() -> Self {
        Self {
            target: ErgodicityTarget::Fast,
            n_paths: 10_000,
            x: None,
            regime: 0,
            eta: None,
            times_seconds: (0..=8).map(|k| k as f64 * 0.5).collect(),
            dt_seconds: 0.01,
            burn_in_seconds: None,
            stationary_samples: 5,
            sample_interval_seconds: 2.0,
            observable: Observable::Identity,
            coordinate: 0,
            bound_rate: 0.8,
            eps: vec![0.1, 0.01],
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulusConfig {
    pub eps: f64,
    pub anchor_seconds: f64,
    pub taus_seconds: Vec<f64>,
    pub n_paths: usize,
}

impl Default for ModulusConfig {
    fn default() -> Self {
        Self { eps: 0.01, anchor_seconds: 0.2, taus_seconds: vec![0.05, 0.1, 0.2, 0.4], n_paths: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub eps: f64,
    pub regime: usize,
    pub iterations: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { eps: 0.1, regime: 0, iterations: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub eps: Vec<f64>,
    pub t_points_seconds: Vec<f64>,
    pub n_outer: usize,
    pub n_inner: usize,
    pub inner_fast_dt: f64,
    pub budget_cap: usize,
    pub bump_center: Vec<f64>,
    pub bump_radius: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.01],
            t_points_seconds: vec![0.1, 0.2, 0.3, 0.4],
            n_outer: 64,
            n_inner: 64,
            inner_fast_dt: 0.05,
            budget_cap: 1 << 22,
            bump_center: vec![1.0],
            bump_radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub xi_lo: Vec<f64>,
    pub xi_hi: Vec<f64>,
    pub pairs: usize,
    pub declared_lipschitz: Option<Vec<f64>>,
    /// Frozen slow states for the dissipativity check; defaults to `x0`.
    pub frozen_points: Vec<Vec<f64>>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            x_lo: vec![-5.0],
            x_hi: vec![5.0],
            xi_lo: vec![-5.0],
            xi_hi: vec![5.0],
            pairs: 1000,
            declared_lipschitz: None,
            frozen_points: Vec::new(),
        }
    }
}

/// Reads and parses a config; unknown keys and malformed values are
/// reported with their key path.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let key = e.span().map(|s| key_at(text, s.start)).unwrap_or_else(|| "<root>".into());
        CliError::config(key, e.message().to_string())
    })
}

/// Dotted key path of the entry containing byte `offset`, with its line.
fn key_at(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line_no = before.lines().count().max(1);
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("").trim();
    let section = before[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line.split('=').next().filter(|_| line.contains('=')).map(|k| k.trim().trim_matches('"').to_string());
    let path = match (section, key) {
        (Some(s), Some(k)) => format!("{s}.{k}"),
        (Some(s), None) => s,
        (None, Some(k)) => k,
        (None, None) => "<root>".into(),
    };
    format!("{path} (line {line_no})")
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::config(key, format!("must be at least {min}, got {v}")))
    }
}

fn dims(key: &str, v: &[f64], d: usize) -> Result<(), CliError> {
    if v.len() != d {
        return Err(CliError::config(key, format!("expected {d} entries, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::config(key, "entries must be finite"));
    }
    Ok(())
}

fn descending(key: &str, eps: &[f64]) -> Result<(), CliError> {
    for (i, &e) in eps.iter().enumerate() {
        positive(&format!("{key}[{i}]"), e)?;
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::config(key, "must be strictly descending"));
    }
    Ok(())
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> Result<Matrix<f64>, CliError> {
    Matrix::from_rows(rows).ok_or_else(|| CliError::config(key, "rows must have equal length"))
}

fn schedule(key: &str, breakpoints: &[f64], mats: &[Vec<Vec<f64>>]) -> Result<GeneratorSchedule<f64>, CliError> {
    let matrices = mats
        .iter()
        .enumerate()
        .map(|(i, m)| matrix(&format!("{key}[{i}]"), m))
        .collect::<Result<Vec<_>, _>>()?;
    GeneratorSchedule::piecewise(breakpoints.to_vec(), matrices).map_err(|e| CliError::config(key, e.to_string()))
}

impl ExperimentConfig {
    pub fn build_switching(&self) -> Result<Option<TwoScaleGenerator<f64>>, CliError> {
        let Some(s) = &self.switching else { return Ok(None) };
        if s.fast.is_empty() {
            return Err(CliError::config("switching.fast", "at least one generator is required"));
        }
        let breakpoints = match &s.breakpoints_seconds {
            Some(b) => b.clone(),
            None if s.fast.len() == 1 => vec![f64::NEG_INFINITY, f64::INFINITY],
            None => {
                return Err(CliError::config("switching.breakpoints_seconds", "required for several segments"))
            }
        };
        let fast = schedule("switching.fast", &breakpoints, &s.fast)?;
        let n = fast.dim();
        let slow = match &s.slow {
            Some(m) => schedule("switching.slow", &breakpoints, m)?,
            None => GeneratorSchedule::zero(n),
        };
        let partition = match &s.classes {
            Some(c) => ClassPartition::new(c.clone()).map_err(|e| CliError::config("switching.classes", e.to_string()))?,
            None => ClassPartition::single(n).map_err(|e| CliError::config("switching.fast", e.to_string()))?,
        };
        TwoScaleGenerator::new(fast, slow, partition)
            .map(Some)
            .map_err(|e| CliError::config("switching", e.to_string()))
    }

    /// The benchmark with the configured overrides applied.
    pub fn build_model(&self) -> Result<Model, CliError> {
        let mut model: Model = benchmarks::by_name(&self.model.benchmark)
            .map_err(|e| CliError::config("model.benchmark", e.to_string()))?;
        if let Some(gen) = self.build_switching()? {
            if gen.n_states() != model.coefficients().regimes() {
                return Err(CliError::config(
                    "switching.fast",
                    format!("benchmark has {} regimes, generator has {}", model.coefficients().regimes(), gen.n_states()),
                ));
            }
            let r0 = self.model.r0.unwrap_or(0);
            let (x0, xi0) = (model.x0().to_vec(), model.xi0().to_vec());
            model = model
                .with_initial(x0, xi0, r0)
                .and_then(|m| m.with_switching(gen))
                .map_err(|e| CliError::config("switching", e.to_string()))?;
        }
        let m = &self.model;
        if m.x0.is_some() || m.xi0.is_some() || m.r0.is_some() {
            let x0 = m.x0.clone().unwrap_or_else(|| model.x0().to_vec());
            let xi0 = m.xi0.clone().unwrap_or_else(|| model.xi0().to_vec());
            dims("model.x0", &x0, model.slow_dim())?;
            dims("model.xi0", &xi0, model.fast_dim())?;
            let r0 = m.r0.unwrap_or(model.r0());
            model = model.with_initial(x0, xi0, r0).map_err(|e| CliError::config("model.r0", e.to_string()))?;
        }
        Ok(model)
    }

    /// Schema checks for the parts of the config the study uses. Runs
    /// before any output is written.
    pub fn validate(&self, study: Study) -> Result<Model, CliError> {
        if let Some(s) = self.study {
            if s != study {
                return Err(CliError::config("study", format!("config is for `{}`, not `{}`", s.name(), study.name())));
            }
        }
        let model = self.build_model()?;
        let (d, m) = (model.slow_dim(), model.fast_dim());
        let g = &self.grid;
        if !g.t0_seconds.is_finite() {
            return Err(CliError::config("grid.t0_seconds", "must be finite"));
        }
        positive("grid.dt_seconds", g.dt_seconds)?;
        if !(g.t_end_seconds > g.t0_seconds) || !g.t_end_seconds.is_finite() {
            return Err(CliError::config("grid.t_end_seconds", "must exceed grid.t0_seconds"));
        }
        if self.run.formats.is_empty() {
            return Err(CliError::config("run.formats", "at least one format is required"));
        }
        let averaging_used = matches!(study, Study::Average | Study::Converge | Study::Perturbation)
            || (study == Study::Simulate && self.simulate.mode == SimulateMode::Averaged);
        if averaging_used {
            let a = &self.averaging;
            at_least("averaging.n_paths", a.n_paths, 1)?;
            positive("averaging.dt_seconds", a.dt_seconds)?;
            positive("averaging.sample_interval_seconds", a.sample_interval_seconds)?;
            if let Some(b) = a.burn_in_seconds {
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(CliError::config("averaging.burn_in_seconds", "must be nonnegative"));
                }
            }
            if let Some(h) = a.horizon_seconds {
                positive("averaging.horizon_seconds", h)?;
            }
            if a.source == AveragedSource::Grid {
                dims("averaging.grid_lo", &a.grid_lo, d)?;
                dims("averaging.grid_hi", &a.grid_hi, d)?;
                if a.grid_nodes.len() != d || a.grid_nodes.iter().any(|&n| n < 2) {
                    return Err(CliError::config("averaging.grid_nodes", format!("need {d} counts of at least 2")));
                }
                if a.grid_lo.iter().zip(&a.grid_hi).any(|(l, h)| !(h > l)) {
                    return Err(CliError::config("averaging.grid_hi", "must exceed averaging.grid_lo"));
                }
            }
            for (i, p) in a.points.iter().enumerate() {
                dims(&format!("averaging.points[{i}]"), p, d)?;
            }
        }
        match study {
            Study::Qsd => {
                for (i, &t) in self.qsd.times_seconds.iter().enumerate() {
                    if !t.is_finite() {
                        return Err(CliError::config(format!("qsd.times_seconds[{i}]"), "must be finite"));
                    }
                }
            }
            Study::Simulate => {
                let s = &self.simulate;
                at_least("simulate.n_paths", s.n_paths, 1)?;
                if s.mode == SimulateMode::Coupled {
                    positive("simulate.eps", s.eps)?;
                }
                if let Some(x) = &s.x_frozen {
                    dims("simulate.x_frozen", x, d)?;
                }
                if s.regime >= model.switching().n_states() {
                    return Err(CliError::config("simulate.regime", "out of range"));
                }
            }
            Study::Average => {}
            Study::Converge => {
                let c = &self.converge;
                if !c.eps.is_empty() {
                    descending("converge.eps", &c.eps)?;
                }
                at_least("converge.n_paths", c.n_paths, 2)?;
                at_least("converge.floor_replicates", c.floor_replicates, 1)?;
            }
            Study::Ergodicity => {
                let e = &self.ergodicity;
                at_least("ergodicity.n_paths", e.n_paths, 2)?;
                match e.target {
                    ErgodicityTarget::Fast => {
                        positive("ergodicity.dt_seconds", e.dt_seconds)?;
                        positive("ergodicity.sample_interval_seconds", e.sample_interval_seconds)?;
                        positive("ergodicity.bound_rate", e.bound_rate)?;
                        if let Some(x) = &e.x {
                            dims("ergodicity.x", x, d)?;
                        }
                        if let Some(eta) = &e.eta {
                            dims("ergodicity.eta", eta, m)?;
                        }
                        if e.coordinate >= m {
                            return Err(CliError::config("ergodicity.coordinate", "out of range"));
                        }
                        if e.times_seconds.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                            return Err(CliError::config("ergodicity.times_seconds", "must be nonnegative"));
                        }
                    }
                    ErgodicityTarget::Switching => {
                        for (i, &x) in e.eps.iter().enumerate() {
                            positive(&format!("ergodicity.eps[{i}]"), x)?;
                        }
                        if !e.beta.is_finite() {
                            return Err(CliError::config("ergodicity.beta", "must be finite"));
                        }
                    }
                }
            }
            Study::Modulus => {
                let c = &self.modulus;
                positive("modulus.eps", c.eps)?;
                at_least("modulus.n_paths", c.n_paths, 2)?;
                if !(c.anchor_seconds >= 0.0) {
                    return Err(CliError::config("modulus.anchor_seconds", "must be nonnegative"));
                }
                if c.taus_seconds.is_empty() {
                    return Err(CliError::config("modulus.taus_seconds", "at least one lag is required"));
                }
                for (i, &t) in c.taus_seconds.iter().enumerate() {
                    positive(&format!("modulus.taus_seconds[{i}]"), t)?;
                }
            }
            Study::Picard => {
                positive("picard.eps", self.picard.eps)?;
                at_least("picard.iterations", self.picard.iterations, 1)?;
                if self.picard.regime >= model.switching().n_states() {
                    return Err(CliError::config("picard.regime", "out of range"));
                }
            }
            Study::Perturbation => {
                let p = &self.perturbation;
                descending("perturbation.eps", &p.eps)?;
                at_least("perturbation.n_outer", p.n_outer, 2)?;
                at_least("perturbation.n_inner", p.n_inner, 2)?;
                positive("perturbation.inner_fast_dt", p.inner_fast_dt)?;
                positive("perturbation.bump_radius", p.bump_radius)?;
                dims("perturbation.bump_center", &p.bump_center, d)?;
            }
            Study::Validate => {
                let v = &self.validate;
                dims("validate.x_lo", &v.x_lo, d)?;
                dims("validate.x_hi", &v.x_hi, d)?;
                dims("validate.xi_lo", &v.xi_lo, m)?;
                dims("validate.xi_hi", &v.xi_hi, m)?;
                at_least("validate.pairs", v.pairs, 1)?;
                for (i, p) in v.frozen_points.iter().enumerate() {
                    dims(&format!("validate.frozen_points[{i}]"), p, d)?;
                }
            }
        }
        Ok(model)
    }
}
