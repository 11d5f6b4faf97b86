//! The library walkthrough from the README, kept compiling and passing.

use slowfast::analysis::{weak_convergence_study, ConvergenceSettings};
use slowfast::averaging::{analytic_averaged, build_averaged_model, InvariantSettings, XHandling};
use slowfast::integrator::simulate_coupled;
use slowfast::model::{benchmarks, CoefficientSet, JumpMeasure, SlowFastModel};
use slowfast::switching::TwoScaleGenerator;
use slowfast::{Grid, Matrix64, NoiseBundle, Schedule};

#[test]
fn readme_walkthrough() -> slowfast::Result<()> {
    // dx = c_r xi dt + dw, d xi = (x - xi) dt / eps + dW / sqrt(eps).
    let coefficients = CoefficientSet::new(1, 1, 2)
        .with_drift(|_x, r, xi, out| out[0] = [3.0, 6.0][r] * xi[0])
        .with_diffusion(|_x, _r, _xi, sigma| sigma[(0, 0)] = 1.0)
        .with_fast_drift(|x, xi, out| out[0] = x[0] - xi[0])
        .with_fast_diffusion(|_x, _xi, s| s[(0, 0)] = 1.0);
    let q = Matrix64::from_rows(&[[-1.0, 1.0], [2.0, -2.0]]).unwrap();
    let switching = TwoScaleGenerator::single_class(Schedule::constant(q)?)?;
    let model = SlowFastModel::new(coefficients, JumpMeasure::empty(), switching, vec![0.0], vec![0.0], 0)?;

    let grid = Grid::new(0.0, 1.0, 1e-3)?;
    let path = simulate_coupled(&model, 0.01, &grid, &NoiseBundle::new(7, 0))?;
    assert_eq!(path.nodes(), 1001);

    let sampled = build_averaged_model(&model, XHandling::OnDemand, &InvariantSettings::new(100, 7))?;
    let point = sampled.evaluate(0.0, &[1.0], 0)?;
    assert!((point.drift[0] - 4.0).abs() < 0.3);

    let linear: slowfast::Model = benchmarks::linear();
    let averaged = analytic_averaged::<f64>("linear")?;
    let settings = ConvergenceSettings::new(vec![0.1, 0.01], 0.5, 1e-2, 500, 7);
    let report = weak_convergence_study(&linear, &averaged, &settings)?;
    assert_eq!(report.rows.len(), 2);
    Ok(())
}
