// Negated comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod report;
mod studies;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

use config::Study;
use error::CliError;
use report::{OutputDir, RunManifest};

/// Runs one study of a slow-fast jump-diffusion with Markov switching.
#[derive(Debug, Parser)]
#[command(name = "slowfast", version)]
struct Args {
    #[arg(value_enum)]
    study: Study,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `run.output_dir`, then `$SLOWFAST_OUT/<study>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides `run.jobs`. Zero uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &Args) -> Result<PathBuf, CliError> {
    let mut cfg = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        cfg.run.jobs = jobs;
    }
    let model = cfg.validate(args.study)?;
    let root = output_root(args, &cfg);
    let jobs = match cfg.run.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config("run.jobs", e.to_string()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut dir = OutputDir::create(&root)?;
    pool.install(|| studies::run(args.study, &cfg, &model, &mut dir))?;
    let effective = toml::to_string(&cfg).expect("config serialises to TOML");
    dir.finish(RunManifest {
        study: args.study.name().into(),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        config: effective,
        seed: cfg.run.seed,
        jobs,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        files: Vec::new(),
    })
}

fn output_root(args: &Args, cfg: &config::ExperimentConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    if let Some(dir) = &cfg.run.output_dir {
        return dir.clone();
    }
    let base = std::env::var_os("SLOWFAST_OUT").map_or_else(|| PathBuf::from("slowfast-out"), PathBuf::from);
    base.join(args.study.name())
}
