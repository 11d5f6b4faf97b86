//! Invariant measures of the frozen fast process and the averaged slow
//! dynamics built from them.

mod analytic;
mod coefficient;
mod invariant;
mod model;

pub use analytic::analytic_averaged;
pub use coefficient::{
    average_coefficient, average_over_measure, class_weights, psd_root, AveragedValue, CoefficientSelector,
};
pub use invariant::{
    ergodicity_decay, estimate_invariant_measure, sampled_mixing_rate, DecayStatus, ErgodicityReport,
    ErgodicitySettings, InvariantMeasureEstimate, InvariantSettings,
};
pub use model::{
    build_averaged_model, AggregatedSchedule, AveragedJumpFn, AveragedMatrixFn, AveragedModel, AveragedPoint,
    AveragedVectorFn, ClosedForm, GridBundle, GridRecord, GridSpec, Provenance, XHandling,
};

#[cfg(test)]
mod tests;
