//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p slowfast-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use slowfast::analysis::{
    bump_gradient, modulus_check, perturbation_magnitude, switching_ergodicity_study, weak_convergence_study,
    ConvergenceSettings, PerturbationSettings,
};
use slowfast::averaging::{analytic_averaged, ergodicity_decay, estimate_invariant_measure, ErgodicitySettings, InvariantSettings};
use slowfast::integrator::picard_iterate;
use slowfast::model::benchmarks;
use slowfast::switching::{
    aggregated_generator, check_weak_irreducibility, validate_generator, ClassPartition, GeneratorSchedule,
    TimeWeight, TwoScaleGenerator,
};
use slowfast::{Grid, Matrix64, Model, NoiseBundle, StreamLabel};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Result<Outcome, String>;

fn main() -> ExitCode {
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let checks: [(usize, &str, Check); 11] = [
        (1, "quasi-stationary distributions", criterion_1),
        (2, "aggregated generator", criterion_2),
        (3, "switching ergodicity", criterion_3),
        (4, "frozen invariant law", criterion_4),
        (5, "ergodic rate", criterion_5),
        (6, "Picard contraction", criterion_6),
        (7, "increment moments", criterion_7),
        (8, "weak convergence, one class", criterion_8),
        (9, "weak convergence, two classes", criterion_9),
        (10, "perturbation diagnostic", criterion_10),
        (11, "determinism across --jobs", criterion_11),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let clock = Instant::now();
        let result = check();
        let secs = clock.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!("{} criterion {n} ({name}): {detail} [{secs:.1} s]", if pass { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rows(q: &Matrix64) -> Vec<Vec<f64>> {
    q.to_rows()
}

/// Random generator with rates in multiples of 1/8 and a positive cycle.
fn random_generator(rng: &mut impl Rng, n: usize) -> Matrix64 {
    let mut q = Matrix64::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = if j == (i + 1) % n { rng.random_range(1..=16) } else { rng.random_range(0..=16) };
                q[(i, j)] = k as f64 / 8.0;
            }
        }
        let sum: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -sum;
    }
    q
}

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite")
}

/// Exact `nu` with `nu Q = 0`, `sum nu = 1` by rational Gauss-Jordan
/// elimination on the bordered system.
fn exact_null_vector(q: &Matrix64) -> Vec<BigRational> {
    let n = q.rows();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            let mut row: Vec<BigRational> =
                (0..n).map(|j| if i == n - 1 { BigRational::from_integer(BigInt::from(1)) } else { rational(q[(j, i)]) }).collect();
            row.push(BigRational::from_integer(BigInt::from(u8::from(i == n - 1))));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !a[r][c].is_zero()).expect("nonsingular bordered system");
        a.swap(c, p);
        let pivot = a[c][c].clone();
        for v in a[c].iter_mut() {
            *v = &*v / &pivot;
        }
        for r in 0..n {
            if r != c && !a[r][c].is_zero() {
                let f = a[r][c].clone();
                let pivot_row = a[c].clone();
                for (v, p) in a[r].iter_mut().zip(&pivot_row) {
                    *v = &*v - &f * p;
                }
            }
        }
    }
    a.into_iter().map(|r| r[n].clone()).collect()
}

fn to_f64(r: &BigRational) -> f64 {
    let (n, d) = (r.numer().to_string().parse::<f64>().unwrap(), r.denom().to_string().parse::<f64>().unwrap());
    n / d
}

fn criterion_1() -> Result<Outcome, String> {
    let mut rng = NoiseBundle::new(SEED, 1).stream(StreamLabel::Auxiliary(1));
    let (mut worst_residual, mut worst_oracle) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..=5);
        let q = random_generator(&mut rng, n);
        let nu = check_weak_irreducibility(&q).map_err(err)?;
        let residual = q.vec_mul(&nu).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let exact = exact_null_vector(&q);
        let gap = nu.iter().zip(&exact).fold(0.0f64, |m, (a, e)| m.max((rational(*a) - e).abs().to_f64_lossy()));
        worst_residual = worst_residual.max(residual);
        worst_oracle = worst_oracle.max(gap);
    }
    let hand = [
        (vec![vec![-1.0, 1.0], vec![2.0, -2.0]], [2.0 / 3.0, 1.0 / 3.0]),
        (vec![vec![-3.0, 3.0], vec![1.0, -1.0]], [0.25, 0.75]),
    ];
    let mut worst_hand = 0.0f64;
    for (q, want) in hand {
        let nu = check_weak_irreducibility(&Matrix64::from_rows(&q).unwrap()).map_err(err)?;
        worst_hand = nu.iter().zip(want).fold(worst_hand, |m, (a, b)| m.max((a - b).abs()));
    }
    Ok(outcome(
        worst_residual <= 1e-10 && worst_oracle <= 1e-10 && worst_hand <= 1e-12,
        format!("max |nu Q| = {worst_residual:.2e}, max oracle gap = {worst_oracle:.2e}, hand examples {worst_hand:.2e}"),
    ))
}

trait Lossy {
    fn to_f64_lossy(&self) -> f64;
}

impl Lossy for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        to_f64(self)
    }
}

/// `diag(nu^1, .., nu^l) Q_hat diag(1_{m_1}, .., 1_{m_l})` by explicit
/// matrix products.
fn aggregation_oracle(nu: &[Vec<f64>], q_hat: &Matrix64, p: &ClassPartition) -> Matrix64 {
    let (l, m) = (p.n_classes(), p.n_states());
    let mut left = Matrix64::zeros(l, m);
    let mut right = Matrix64::zeros(m, l);
    for c in 0..l {
        for (k, s) in p.range(c).enumerate() {
            left[(c, s)] = nu[c][k];
            right[(s, c)] = 1.0;
        }
    }
    left.matmul(q_hat).matmul(&right)
}

fn criterion_2() -> Result<Outcome, String> {
    let gen = benchmarks::two_class_switching::<f64>();
    let computed = aggregated_generator(&gen, 0.0).map_err(err)?;
    let oracle = aggregation_oracle(&[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0]], gen.slow().at(0.0).map_err(err)?, gen.partition());
    let worked = Matrix64::from_rows(&[[-4.0 / 3.0, 4.0 / 3.0], [2.0, -2.0]]).unwrap();
    let gap = computed.sub(&oracle).max_abs().max(computed.sub(&worked).max_abs());

    let mut rng = NoiseBundle::new(SEED, 2).stream(StreamLabel::Auxiliary(2));
    let (mut random_gap, mut invalid) = (0.0f64, 0usize);
    for _ in 0..20 {
        let sizes: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..=3)).collect();
        let p = ClassPartition::new(sizes.clone()).map_err(err)?;
        let m = p.n_states();
        let mut fast = Matrix64::zeros(m, m);
        let mut nu = Vec::new();
        for (c, &size) in sizes.iter().enumerate() {
            let block = random_generator(&mut rng, size);
            for (a, i) in p.range(c).enumerate() {
                for (b, j) in p.range(c).enumerate() {
                    fast[(i, j)] = block[(a, b)];
                }
            }
            nu.push(exact_null_vector(&block).iter().map(to_f64).collect::<Vec<_>>());
        }
        // A single class has no inter-class transitions.
        let slow = if p.n_classes() == 1 { Matrix64::zeros(m, m) } else { random_generator(&mut rng, m) };
        let gen = TwoScaleGenerator::new(
            GeneratorSchedule::constant(fast).map_err(err)?,
            GeneratorSchedule::constant(slow.clone()).map_err(err)?,
            p.clone(),
        )
        .map_err(err)?;
        let q_bar = aggregated_generator(&gen, 0.0).map_err(err)?;
        invalid += usize::from(validate_generator(&q_bar).is_err());
        random_gap = random_gap.max(q_bar.sub(&aggregation_oracle(&nu, &slow, &p)).max_abs());
    }
    Ok(outcome(
        gap <= 1e-12 && random_gap <= 1e-12 && invalid == 0,
        format!(
            "worked example {:?} off by {gap:.2e}; 20 random: oracle gap {random_gap:.2e}, {invalid} invalid",
            rows(&computed)
        ),
    ))
}

fn criterion_3() -> Result<Outcome, String> {
    let clock = Instant::now();
    let gen = benchmarks::symmetric_switching::<f64>();
    let report =
        switching_ergodicity_study(&gen, &[0.1, 0.01], &TimeWeight::Constant(1.0), 0.0, 1.0, 0, 1000, SEED).map_err(err)?;
    let secs = clock.elapsed().as_secs_f64();
    let (a, b) = (report.rows[0].mean_square, report.rows[1].mean_square);
    Ok(outcome(
        b <= 0.25 * a && secs < 30.0,
        format!("E|int (I - nu)|^2: {a:.4e} at eps 0.1, {b:.4e} at eps 0.01, ratio {:.3} (need <= 0.25)", b / a),
    ))
}

/// Linear benchmark frozen at `x = 2`: fast drift `-(xi - 2)`, unit noise.
fn frozen_ou() -> Model {
    benchmarks::linear()
}

fn criterion_4() -> Result<Outcome, String> {
    let mut s = InvariantSettings::new(10_000, SEED);
    s.burn_in = Some(10.0);
    s.horizon = Some(10.0);
    s.sample_interval = 10.0;
    let est = estimate_invariant_measure(&frozen_ou(), &[2.0], 0, &s).map_err(err)?;
    let mean = est.mean[0];
    let var = est.second_moment[0] - mean * mean;
    Ok(outcome(
        (mean - 2.0).abs() <= 0.03 && (var - 0.5).abs() <= 0.03 && est.len() >= 10_000,
        format!("{} pooled samples: mean {mean:.4} (2 +- 0.03), variance {var:.4} (0.5 +- 0.03)", est.len()),
    ))
}

fn criterion_5() -> Result<Outcome, String> {
    let clock = Instant::now();
    let mut s = ErgodicitySettings::new(100_000, SEED);
    s.burn_in = Some(8.0);
    let times: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let report = ergodicity_decay(&frozen_ou(), &[2.0], 0, &|xi: &[f64]| xi[0], &[3.0], &times, &s).map_err(err)?;
    let secs = clock.elapsed().as_secs_f64();
    let lambda = report.lambda_hat.ok_or("no decay above the noise floor")?;
    let (c, holds) = report.exponential_bound(0.8, 1.0).ok_or("no fitted prefactor")?;
    Ok(outcome(
        (0.8..=1.2).contains(&lambda) && holds && secs < 120.0,
        format!("lambda_hat {lambda:.4} on {} points (need [0.8, 1.2]); C e^(-0.8 t) bound with C = {c:.3} holds: {holds}", report.points_used),
    ))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// First `n` from which every later ratio `Delta_{k+1} / Delta_k` is below one.
fn contracting_from(deltas: &[f64]) -> Option<usize> {
    let ratios: Vec<f64> = deltas.windows(2).map(|w| w[1] / w[0]).collect();
    (0..ratios.len()).find(|&n| ratios[n..].iter().all(|&r| r < 1.0))
}

fn criterion_6() -> Result<Outcome, String> {
    let grid = Grid::new(0.0, 1.0, 1e-4).map_err(err)?;
    let noise = NoiseBundle::new(SEED, 6);
    let report = picard_iterate(&benchmarks::exponential::<f64>(), 0, 1.0, &grid, &noise, 6).map_err(err)?;
    let worst = (0..=5)
        .map(|n| (report.deltas[n] * factorial(n + 1) - 1.0).abs())
        .fold(0.0f64, f64::max);
    let mut detail = format!("deterministic: max relative gap to T^(n+1)/(n+1)! over n <= 5 is {:.2}%", 100.0 * worst);
    let mut pass = worst <= 0.1;
    for (name, model) in [("ou", benchmarks::ou::<f64>()), ("linear", benchmarks::linear::<f64>())] {
        for dt in [1e-2, 1e-3] {
            let grid = Grid::new(0.0, 1.0, dt).map_err(err)?;
            let r = picard_iterate(&model, 0, 1.0, &grid, &noise, 13).map_err(err)?;
            let from = contracting_from(&r.deltas);
            pass &= from.is_some_and(|n| n <= 12);
            detail.push_str(&format!("; {name} dt {dt}: ratios < 1 from n = {from:?}"));
        }
    }
    Ok(outcome(pass, detail))
}

fn criterion_7() -> Result<Outcome, String> {
    let taus = [0.05, 0.1, 0.2, 0.4];
    let slope = |model: &Model, seed: u64| -> Result<f64, String> {
        let r = modulus_check(model, 0.01, 1e-3, 0.2, &taus, 4000, seed).map_err(err)?;
        r.slope.ok_or_else(|| "no slope".to_string())
    };
    let diffusion = slope(&benchmarks::diffusion_only(), SEED)?;
    let drift = slope(&benchmarks::drift_only(), SEED + 1)?;
    Ok(outcome(
        (0.9..=1.1).contains(&diffusion) && (1.9..=2.1).contains(&drift),
        format!("log-log slope {diffusion:.4} for dx = dw (need [0.9, 1.1]), {drift:.4} for dx = dt (need [1.9, 2.1])"),
    ))
}

fn convergence(name: &str, check_occupation: bool) -> Result<Outcome, String> {
    let clock = Instant::now();
    let model: Model = benchmarks::by_name(name).map_err(err)?;
    let avg = analytic_averaged::<f64>(name).map_err(err)?;
    let settings = ConvergenceSettings::new(vec![0.1, 0.01, 0.001], 1.0, 1e-3, 10_000, SEED);
    let r = weak_convergence_study(&model, &avg, &settings).map_err(err)?;
    let secs = clock.elapsed().as_secs_f64();
    let w1: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.w1[0])).collect();
    let ratio = r.final_floor_ratio[0];
    let mut pass = r.strictly_decreasing && ratio <= 3.0 && secs < 300.0;
    let mut detail = format!(
        "W1 [{}] strictly decreasing: {}; final / floor {ratio:.3} (floor {:.4}, need <= 3)",
        w1.join(", "),
        r.strictly_decreasing,
        r.noise_floor_w1[0]
    );
    if check_occupation {
        let gap = r.rows.last().map(|row| row.occupation_gap).unwrap_or(f64::INFINITY);
        pass &= gap <= 0.03;
        detail.push_str(&format!("; class occupation gap at eps 0.001 {gap:.4} (need <= 0.03)"));
    }
    Ok(outcome(pass, detail))
}

fn criterion_8() -> Result<Outcome, String> {
    convergence("linear", false)
}

fn criterion_9() -> Result<Outcome, String> {
    convergence("linear_two_class", true)
}

fn criterion_10() -> Result<Outcome, String> {
    let grad = |x: &[f64], o: &mut [f64]| bump_gradient(&[1.0], 4.0, x, o);
    let t_points = vec![0.1, 0.2, 0.3, 0.4];
    let run = |name: &str, eps: f64| {
        let model: Model = benchmarks::by_name(name).map_err(err)?;
        let avg = analytic_averaged::<f64>(name).map_err(err)?;
        let s = PerturbationSettings::new(eps, t_points.clone(), 0.5, 64, 64, SEED);
        perturbation_magnitude(&model, &avg, &grad, &s).map_err(err)
    };
    let coarse = run("linear", 0.1)?;
    let fine = run("linear", 0.01)?;
    let exact = run("xi_free", 0.1)?;
    let ratio = fine.sup_estimate / coarse.sup_estimate;
    Ok(outcome(
        ratio <= 0.5 && exact.sup_estimate <= exact.inner_noise_floor,
        format!(
            "sup |iota_1| {:.4e} at eps 0.1, {:.4e} at eps 0.01, ratio {ratio:.3} (need <= 0.5); matched averages give {:.1e} (floor {:.1e})",
            coarse.sup_estimate, fine.sup_estimate, exact.sup_estimate, exact.inner_noise_floor
        ),
    ))
}

const DETERMINISM_CONFIG: &str = r#"
[model]
benchmark = "linear_two_class"

[grid]
t_end_seconds = 0.5
dt_seconds = 0.01

[simulate]
eps = 0.05
n_paths = 4

[converge]
eps = [0.1, 0.05]
n_paths = 300
floor_replicates = 2

[perturbation]
eps = [0.1]
t_points_seconds = [0.1, 0.2]
n_outer = 6
n_inner = 6

[modulus]
eps = 0.05
anchor_seconds = 0.1
taus_seconds = [0.1, 0.2]
n_paths = 200
"#;

/// Every output except the manifest, which records wall-clock time.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg = tmp.path().join("config.toml");
    fs::write(&cfg, DETERMINISM_CONFIG).map_err(err)?;
    let studies = ["simulate", "converge", "perturbation", "modulus", "qsd", "picard"];
    let mut compared = 0;
    let mut mismatched = Vec::new();
    for study in studies {
        let mut runs = Vec::new();
        for (k, jobs) in ["1", "3", "1"].iter().enumerate() {
            let out = tmp.path().join(format!("{study}-{k}"));
            let status = Command::new(env!("CARGO_BIN_EXE_slowfast"))
                .args([study, "--seed", "5", "--jobs", jobs, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(err)?;
            if !status.status.success() {
                return Err(format!("{study} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            runs.push(outputs(&out));
        }
        compared += runs[0].len();
        if runs.iter().any(|r| r != &runs[0]) {
            mismatched.push(study);
        }
    }
    Ok(outcome(
        mismatched.is_empty(),
        format!("{compared} files from {} studies compared across --jobs 1, 3 and a rerun; mismatches: {mismatched:?}", studies.len()),
    ))
}
