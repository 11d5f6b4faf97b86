use super::*;
use crate::averaging::analytic_averaged;
use crate::integrator::PathGrid;
use crate::model::benchmarks;
use crate::switching::{TimeWeight, TwoScaleGenerator};
use crate::Error;

#[test]
fn wasserstein_examples() {
    assert_eq!(wasserstein1(&[0.3, 1.0, 2.0], &[0.3, 1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(wasserstein1(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(wasserstein1(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(wasserstein1(&[2.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert!(matches!(wasserstein1(&[0.0], &[1.0, 2.0]), Err(Error::CountMismatch { left: 1, right: 2 })));
}

#[test]
fn ks_examples() {
    assert_eq!(ks_statistic(&[0.0, 1.0, 5.0], &[0.0, 1.0, 5.0]).unwrap(), 0.0);
    assert_eq!(ks_statistic(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(ks_statistic(&[0.0, 1.0], &[0.0, 2.0]).unwrap(), 0.5);
    assert!(ks_statistic::<f64>(&[], &[1.0]).is_err());
    assert!((ks_critical_value(0.05, 100, 100) - 1.358 * (0.02f64).sqrt()).abs() < 1e-3);
}

#[test]
fn ensemble_trivial_models() {
    let grid = PathGrid::new(0.0, 1.0, 0.01).unwrap();
    let zero = benchmarks::zero::<f64>();
    let e = terminal_ensemble(Simulator::Coupled { model: &zero, eps: 0.01 }, 16, &grid, 1).unwrap();
    assert!(e.sorted[0].iter().all(|&v| v == 1.5));
    assert_eq!(e.variance[0], 0.0);
    assert_eq!(e.n_paths, 16);
    let drift = benchmarks::drift_only::<f64>();
    let e = terminal_ensemble(Simulator::Coupled { model: &drift, eps: 0.01 }, 8, &grid, 1).unwrap();
    assert!(e.sorted[0].iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert!(terminal_ensemble(Simulator::Coupled { model: &drift, eps: 0.01 }, 1, &grid, 1).is_err());
}

#[test]
fn ou_terminal_variance() {
    let grid = PathGrid::new(0.0, 1.0, 0.01).unwrap();
    let ou = benchmarks::ou::<f64>();
    let e = terminal_ensemble(Simulator::Coupled { model: &ou, eps: 0.01 }, 10_000, &grid, 3).unwrap();
    let exact = (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((e.variance[0] - exact).abs() < 0.02, "variance {}", e.variance[0]);
    assert!(e.sorted[0].windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let model = benchmarks::linear_jumps::<f64>();
    let grid = PathGrid::new(0.0, 0.5, 0.01).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            terminal_ensemble(Simulator::Coupled { model: &model, eps: 0.05 }, 64, &grid, 9).unwrap()
        })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn identical_laws_stay_within_noise_floor() {
    let model = benchmarks::xi_free::<f64>();
    let avg = analytic_averaged::<f64>("xi_free").unwrap();
    let settings = ConvergenceSettings::new(vec![0.1, 0.01], 1.0, 0.01, 2000, 5);
    let report = weak_convergence_study(&model, &avg, &settings).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert!(row.w1[0] <= 2.0 * report.noise_floor_w1[0], "{} vs {}", row.w1[0], report.noise_floor_w1[0]);
        assert_eq!(row.occupation, vec![1.0]);
    }
}

#[test]
fn single_eps_has_no_slope_and_coarse_steps_fail() {
    let model = benchmarks::xi_free::<f64>();
    let avg = analytic_averaged::<f64>("xi_free").unwrap();
    let mut settings = ConvergenceSettings::new(vec![0.1], 0.5, 0.01, 50, 5);
    let report = weak_convergence_study(&model, &avg, &settings).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.slope, vec![None]);
    assert!(report.strictly_decreasing);
    settings.eps = vec![0.1, 0.001];
    settings.cap_dt_at_eps = false;
    assert!(matches!(weak_convergence_study(&model, &avg, &settings), Err(Error::StepTooCoarse { .. })));
    settings.eps = vec![0.001, 0.1];
    assert!(weak_convergence_study(&model, &avg, &settings).is_err());
}

#[test]
fn noise_floor_is_stable_under_reseeding() {
    let model = benchmarks::xi_free::<f64>();
    let avg = analytic_averaged::<f64>("xi_free").unwrap();
    let floor = |seed| {
        let settings = ConvergenceSettings::new(vec![0.1], 1.0, 0.01, 2000, seed);
        weak_convergence_study(&model, &avg, &settings).unwrap().noise_floor_w1[0]
    };
    let (a, b) = (floor(11), floor(12));
    assert!((a / b - 1.0).abs() <= 0.2, "{a} vs {b}");
}

#[test]
fn switching_study_trivial_cases() {
    let single = TwoScaleGenerator::<f64>::trivial(1).unwrap();
    let r = switching_ergodicity_study(&single, &[0.1, 0.01], &TimeWeight::Constant(1.0), 0.0, 1.0, 0, 20, 1).unwrap();
    assert!(r.rows.iter().all(|row| row.mean_square == 0.0));
    let sym = benchmarks::symmetric_switching::<f64>();
    let r = switching_ergodicity_study(&sym, &[0.1], &TimeWeight::Constant(0.0), 0.0, 1.0, 0, 20, 1).unwrap();
    assert_eq!(r.rows[0].mean_square, 0.0);
}

#[test]
fn switching_study_scales_linearly_in_eps() {
    let sym = benchmarks::symmetric_switching::<f64>();
    let r = switching_ergodicity_study(&sym, &[0.1, 0.01], &TimeWeight::Constant(1.0), 0.0, 1.0, 0, 1000, 2).unwrap();
    let ratio = r.rows[0].mean_square / r.rows[1].mean_square;
    assert!((6.0..=14.0).contains(&ratio), "ratio {ratio}");
    assert!(r.decreasing);
}

#[test]
fn modulus_oracles() {
    let taus = [0.05, 0.1, 0.2, 0.4];
    let zero = benchmarks::zero::<f64>();
    let r = modulus_check(&zero, 0.01, 0.01, 0.2, &taus, 8, 1).unwrap();
    assert!(r.moments.iter().all(|&m| m == 0.0) && r.slope.is_none());
    let drift = benchmarks::drift_only::<f64>();
    let r = modulus_check(&drift, 0.01, 0.01, 0.2, &taus, 8, 1).unwrap();
    for (m, t) in r.moments.iter().zip(taus) {
        assert!((m - t * t).abs() < 1e-12);
    }
    assert!((r.slope.unwrap() - 2.0).abs() < 1e-9);
    let diff = benchmarks::diffusion_only::<f64>();
    let r = modulus_check(&diff, 0.01, 0.01, 0.2, &taus, 4000, 1).unwrap();
    for (m, t) in r.moments.iter().zip(taus) {
        assert!((m / t - 1.0).abs() < 0.1, "tau {t}: {m}");
    }
    assert!((r.slope.unwrap() - 1.0).abs() < 0.1);
    assert!(modulus_check(&diff, 0.01, 0.01, 0.2, &[0.005], 8, 1).is_err());
}

#[test]
fn perturbation_vanishes_when_drift_is_averaged() {
    let model = benchmarks::xi_free::<f64>();
    let avg = analytic_averaged::<f64>("xi_free").unwrap();
    let grad = |x: &[f64], o: &mut [f64]| bump_gradient(&[1.0], 4.0, x, o);
    let settings = PerturbationSettings::new(0.1, vec![0.0, 0.2], 0.4, 4, 4, 1);
    let r = perturbation_magnitude(&model, &avg, &grad, &settings).unwrap();
    assert_eq!(r.sup_estimate, 0.0);
    assert_eq!(r.inner_noise_floor, 0.0);

    let model = benchmarks::linear::<f64>();
    let avg = analytic_averaged::<f64>("linear").unwrap();
    let flat = |_: &[f64], o: &mut [f64]| o.fill(0.0);
    let r = perturbation_magnitude(&model, &avg, &flat, &settings).unwrap();
    assert_eq!(r.sup_estimate, 0.0);
    let r = perturbation_magnitude(&model, &avg, &grad, &settings).unwrap();
    assert!(r.sup_estimate > 0.0);

    let mut big = settings.clone();
    big.budget_cap = 10;
    assert!(matches!(perturbation_magnitude(&model, &avg, &grad, &big), Err(Error::BudgetExceeded { .. })));
}

#[test]
fn bump_gradient_matches_finite_differences() {
    let c = [0.5];
    let bump = |x: f64| {
        let s = (x - 0.5).powi(2) / 4.0;
        if s < 1.0 { (-1.0 / (1.0 - s)).exp() } else { 0.0 }
    };
    for x in [-1.0, 0.0, 1.2, 2.4, 3.0] {
        let mut g = [0.0];
        bump_gradient(&c, 2.0, &[x], &mut g);
        let h = 1e-6;
        let fd = (bump(x + h) - bump(x - h)) / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-6, "x = {x}: {} vs {fd}", g[0]);
    }
}
