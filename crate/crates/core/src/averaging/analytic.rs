//! Closed-form averaged counterparts of the built-in benchmarks.

use super::model::{AveragedModel, ClosedForm};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{benchmarks, SlowFastModel};
use crate::real::Real;
use crate::switching::aggregated_schedule;

/// Exact averaged model of benchmark `name`, with the benchmark's initial
/// data.
pub fn analytic_averaged<T: Real>(name: &str) -> Result<AveragedModel<T>> {
    let model: SlowFastModel<T> = benchmarks::by_name(name)?;
    let scalar = |f: f64, a: f64| -> ClosedForm<T> {
        ClosedForm::new()
            .with_drift(move |_, x: &[T], _, o: &mut [T]| o[0] = T::lit(f) * x[0])
            .with_diffusion(move |_, _, _, s: &mut Matrix<T>| s[(0, 0)] = T::lit(a))
    };
    let single = |cf: ClosedForm<T>| {
        AveragedModel::closed_form(1, 1, model.jumps().clone(), model.x0().to_vec(), 0, None, cf)
    };
    match name {
        "zero" => single(ClosedForm::new()),
        "drift_only" => single(ClosedForm::new().with_drift(|_, _, _, o: &mut [T]| o[0] = T::one())),
        "diffusion_only" => {
            single(ClosedForm::new().with_diffusion(|_, _, _, s: &mut Matrix<T>| s[(0, 0)] = T::one()))
        }
        "ou" | "xi_free" => single(scalar(-1.0, 1.0)),
        "exponential" => single(ClosedForm::new().with_drift(|_, x: &[T], _, o: &mut [T]| o[0] = x[0])),
        "linear" => single(scalar(4.0, 2.0)),
        "linear_jumps" => single(scalar(4.0, 2.0).with_jump(|_, _, _, z: &[T], o: &mut [T]| o[0] = z[0])),
        "linear_two_class" => {
            let cf = ClosedForm::new()
                .with_drift(|_, x: &[T], c, o: &mut [T]| o[0] = T::lit([4.0, -2.0][c]) * x[0])
                .with_diffusion(|_, _, c, s: &mut Matrix<T>| s[(0, 0)] = T::lit([2.0, 1.0][c]));
            let qbar = aggregated_schedule(model.switching(), T::neg_infinity(), T::infinity())?;
            AveragedModel::closed_form(1, 2, model.jumps().clone(), model.x0().to_vec(), 0, Some(qbar), cf)
        }
        other => Err(Error::InvalidInput(format!("no closed-form averaged model for '{other}'"))),
    }
}
