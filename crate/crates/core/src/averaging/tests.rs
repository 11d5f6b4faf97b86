use super::*;
use crate::integrator::{simulate_averaged, PathGrid};
use crate::linalg::Matrix;
use crate::model::{benchmarks, CoefficientSet, JumpMeasure, SlowFastModel};
use crate::rng::NoiseBundle;
use crate::switching::{quasi_stationary_schedule, TwoScaleGenerator};

fn frozen(coef: CoefficientSet<f64>, jumps: JumpMeasure<f64>) -> SlowFastModel<f64> {
    SlowFastModel::new(coef, jumps, TwoScaleGenerator::trivial(1).unwrap(), vec![0.0], vec![0.0], 0).unwrap()
}

fn settings(n_paths: usize, seed: u64) -> InvariantSettings<f64> {
    let mut s = InvariantSettings::new(n_paths, seed);
    s.burn_in = Some(10.0);
    s.horizon = Some(60.0);
    s
}

#[test]
fn deterministic_contraction_gives_point_mass() {
    let m = frozen(CoefficientSet::new(1, 1, 1).with_fast_drift(|_, xi: &[f64], o| o[0] = -xi[0]), JumpMeasure::empty());
    let mut s = settings(4, 1);
    s.xi0 = Some(vec![3.0]);
    s.burn_in = Some(40.0);
    let est = estimate_invariant_measure(&m, &[0.0], 0, &s).unwrap();
    assert!(est.samples().all(|xi| xi[0].abs() < 1e-6));
}

#[test]
fn ou_invariant_law_moments() {
    let m = frozen(
        CoefficientSet::new(1, 1, 1)
            .with_fast_drift(|x: &[f64], xi: &[f64], o| o[0] = x[0] - xi[0])
            .with_fast_diffusion(|_, _, s| s[(0, 0)] = 1.0),
        JumpMeasure::empty(),
    );
    let est = estimate_invariant_measure(&m, &[2.0], 0, &settings(400, 2)).unwrap();
    assert!((est.mean[0] - 2.0).abs() < 0.03, "mean {}", est.mean[0]);
    assert!((est.variance(0) - 0.5).abs() < 0.03, "variance {}", est.variance(0));
}

#[test]
fn jump_driven_fast_variance() {
    // Stationary variance (1 + lambda E z^2) / 2 with lambda = 2, z = +-1/2.
    let jumps = JumpMeasure::scalar(1.0, &[(0.5, 1.0), (-0.5, 1.0)]).unwrap();
    let m = frozen(
        CoefficientSet::new(1, 1, 1)
            .with_fast_drift(|_, xi: &[f64], o| o[0] = -xi[0])
            .with_fast_diffusion(|_, _, s| s[(0, 0)] = 1.0)
            .with_fast_jump(|_, _, z, o| o[0] = z[0]),
        jumps,
    );
    let est = estimate_invariant_measure(&m, &[0.0], 0, &settings(400, 3)).unwrap();
    let expected = 0.5 + 2.0 * 0.25 / 2.0;
    assert!((est.variance(0) - expected).abs() < 0.05, "variance {}", est.variance(0));
}

#[test]
fn default_burn_in_uses_sampled_rate() {
    let m = benchmarks::linear::<f64>();
    let rate = sampled_mixing_rate(&m, &[0.0], 0, 7).unwrap();
    assert!((rate - 1.0).abs() < 1e-9);
    let mut s = InvariantSettings::new(2, 7);
    s.sample_interval = 5.0;
    let est = estimate_invariant_measure(&m, &[0.0], 0, &s).unwrap();
    assert!((est.burn_in - 10.0).abs() < 1e-9 && (est.horizon - 50.0).abs() < 1e-9);
}

#[test]
fn linear_benchmark_averages() {
    let m = benchmarks::linear::<f64>();
    let qsd = quasi_stationary_schedule(m.switching()).unwrap();
    let w = class_weights(&qsd, 0, 0.0).unwrap();
    let s = settings(400, 4);
    for x in [-1.0, 0.5, 2.0] {
        let f = average_coefficient(&m, CoefficientSelector::Drift, &[x], &w, &s).unwrap();
        assert!((f.as_slice()[0] - 4.0 * x).abs() <= 0.02 * 4.0 * x.abs() + 0.03, "x = {x}: {:?}", f);
        let a = average_coefficient(&m, CoefficientSelector::Diffusion, &[x], &w, &s).unwrap();
        assert!((a.as_slice()[0] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn xi_independent_coefficients_average_exactly() {
    let m = benchmarks::xi_free::<f64>();
    let qsd = quasi_stationary_schedule(m.switching()).unwrap();
    let w = class_weights(&qsd, 0, 0.0).unwrap();
    let s = settings(8, 5);
    for x in [-0.7, 0.0, 1.3] {
        let f = average_coefficient(&m, CoefficientSelector::Drift, &[x], &w, &s).unwrap();
        assert_eq!(f.as_slice()[0], -x);
        let a = average_coefficient(&m, CoefficientSelector::Diffusion, &[x], &w, &s).unwrap();
        assert_eq!(a.as_slice()[0], 1.0);
    }
}

#[test]
fn weighted_mean_reproduces_constants() {
    let mut w = coefficient::WeightedMean::new(2);
    for k in 1..10 {
        w.push(k as f64 * 0.1, &[0.3, -7.1]);
    }
    assert_eq!(w.into_inner(), vec![0.3, -7.1]);
}

#[test]
fn psd_root_examples() {
    let s = psd_root(&Matrix::<f64>::from_diagonal(&[4.0, 9.0])).unwrap();
    assert!((s[(0, 0)] - 2.0).abs() < 1e-12 && (s[(1, 1)] - 3.0).abs() < 1e-12 && s[(0, 1)].abs() < 1e-12);
    let a = Matrix::<f64>::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
    let s = psd_root(&a).unwrap();
    let back = s.matmul(&s);
    for k in 0..4 {
        assert!((back.as_slice()[k] - a.as_slice()[k]).abs() < 1e-12);
    }
    let singular = Matrix::<f64>::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
    let s = psd_root(&singular).unwrap();
    assert!((s.matmul(&s)[(0, 1)] - 1.0).abs() < 1e-12);
    assert!(matches!(psd_root(&Matrix::from_diagonal(&[1.0, -1.0])), Err(crate::Error::NotPsd { .. })));
    assert!(psd_root(&Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap()).is_err());
    assert_eq!(psd_root(&Matrix::from_diagonal(&[-1e-9])).unwrap()[(0, 0)], 0.0);
}

#[test]
fn two_class_model_carries_aggregated_generator() {
    let m = benchmarks::linear_two_class::<f64>();
    let spec = GridSpec { lo: vec![-1.0], hi: vec![1.0], nodes: vec![3] };
    let avg = build_averaged_model(&m, XHandling::Grid(spec), &settings(200, 6)).unwrap();
    let q = avg.aggregated_generator().unwrap().at(0.0).unwrap().clone();
    let expected = [[-4.0 / 3.0, 4.0 / 3.0], [2.0, -2.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((q[(i, j)] - expected[i][j]).abs() < 1e-12);
        }
    }
    let p0 = avg.evaluate(0.0, &[1.0], 0).unwrap();
    let p1 = avg.evaluate(0.0, &[1.0], 1).unwrap();
    assert!((p0.drift[0] - 4.0).abs() < 0.1 && (p0.a[(0, 0)] - 2.0).abs() < 1e-12);
    assert!((p1.drift[0] + 2.0).abs() < 0.05 && (p1.a[(0, 0)] - 1.0).abs() < 1e-12);
    assert!((p0.sigma[(0, 0)] - 2f64.sqrt()).abs() < 1e-12);
    assert!(matches!(avg.evaluate(0.0, &[1.5], 0), Err(crate::Error::GridExtrapolation { .. })));
    let closed = analytic_averaged::<f64>("linear_two_class").unwrap();
    assert_eq!(closed.aggregated_generator().unwrap().at(0.0).unwrap(), &q);
}

#[test]
fn grid_matches_on_demand_at_nodes() {
    let m = benchmarks::linear::<f64>();
    let s = settings(50, 8);
    let spec = GridSpec { lo: vec![-1.0], hi: vec![1.0], nodes: vec![5] };
    let grid = build_averaged_model(&m, XHandling::Grid(spec), &s).unwrap();
    let direct = build_averaged_model(&m, XHandling::OnDemand, &s).unwrap();
    for x in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let a = grid.evaluate(0.0, &[x], 0).unwrap();
        let b = direct.evaluate(0.0, &[x], 0).unwrap();
        assert!((a.drift[0] - b.drift[0]).abs() < 1e-12, "x = {x}");
        assert_eq!(a.a, b.a);
    }
    let mid = grid.evaluate(0.0, &[0.25], 0).unwrap().drift[0];
    let lo = grid.evaluate(0.0, &[0.0], 0).unwrap().drift[0];
    let hi = grid.evaluate(0.0, &[0.5], 0).unwrap().drift[0];
    assert!((mid - 0.5 * (lo + hi)).abs() < 1e-12);
    let bundle = grid.to_bundle().unwrap();
    assert_eq!(bundle.records.len(), 5);
    let mut csv = Vec::new();
    grid.write_grid_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
    assert!(direct.to_bundle().is_none());
}

#[test]
fn jump_average_keeps_sign_and_magnitude() {
    let m = benchmarks::linear_jumps::<f64>();
    let spec = GridSpec { lo: vec![0.0], hi: vec![1.0], nodes: vec![2] };
    let avg = build_averaged_model(&m, XHandling::Grid(spec), &settings(20, 9)).unwrap();
    let p = avg.evaluate(0.0, &[0.5], 0).unwrap();
    assert_eq!(p.g_bar, vec![vec![0.5], vec![-0.5]]);
    assert!((p.jump_integral[(0, 0)] - 0.5).abs() < 1e-12);
}

#[test]
fn closed_form_averaged_simulation() {
    let avg = analytic_averaged::<f64>("exponential").unwrap();
    let grid = PathGrid::new(0.0, 1.0, 0.001).unwrap();
    let path = simulate_averaged(&avg, &grid, &NoiseBundle::new(1, 0)).unwrap();
    assert!((path.terminal_x()[0] - 1.001f64.powi(1000)).abs() < 1e-9);
    for name in benchmarks::NAMES {
        let a = analytic_averaged::<f64>(name).unwrap();
        assert_eq!(a.x0(), benchmarks::by_name::<f64>(name).unwrap().x0());
    }
}

#[test]
fn ergodicity_rate_of_ou() {
    let m = frozen(
        CoefficientSet::new(1, 1, 1)
            .with_fast_drift(|_, xi: &[f64], o| o[0] = -xi[0])
            .with_fast_diffusion(|_, _, s| s[(0, 0)] = 1.0),
        JumpMeasure::empty(),
    );
    let mut s = ErgodicitySettings::new(2000, 11);
    s.burn_in = Some(8.0);
    let times: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
    let report = ergodicity_decay(&m, &[0.0], 0, &|xi| xi[0], &[3.0], &times, &s).unwrap();
    assert_eq!(report.status, DecayStatus::Fitted);
    let rate = report.lambda_hat.unwrap();
    assert!((rate - 1.0).abs() < 0.1, "rate {rate}");
    assert!(report.exponential_bound(1.0, 2.0).unwrap().1);
    let flat = ergodicity_decay(&m, &[0.0], 0, &|_| 1.0, &[3.0], &times, &s).unwrap();
    assert_eq!(flat.status, DecayStatus::AllBelowNoiseFloor);
}
