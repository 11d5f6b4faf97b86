// Negated comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod averaging;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod real;
pub mod rng;
pub mod switching;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use real::Real;
pub use rng::{NoiseBundle, StreamLabel};

pub type Matrix64 = linalg::Matrix<f64>;
pub type Model = model::SlowFastModel<f64>;
pub type Coefficients = model::CoefficientSet<f64>;
pub type Jumps = model::JumpMeasure<f64>;
pub type Schedule = switching::GeneratorSchedule<f64>;
pub type Generator = switching::TwoScaleGenerator<f64>;
pub type Grid = integrator::PathGrid<f64>;
pub type Path = integrator::SamplePath<f64>;
pub type Averaged = averaging::AveragedModel<f64>;
pub type Ensemble = analysis::EnsembleSummary<f64>;
