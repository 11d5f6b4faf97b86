//! Statistical verification: terminal ensembles, distribution distances,
//! weak-convergence studies, switching ergodicity, increment moduli and the
//! first-order perturbation diagnostic.

mod convergence;
mod distance;
mod ensemble;
mod modulus;
mod perturbation;
mod switching_study;

pub use convergence::{weak_convergence_study, ConvergenceReport, ConvergenceRow, ConvergenceSettings};
pub use distance::{ks_critical_value, ks_statistic, wasserstein1};
pub use ensemble::{terminal_ensemble, EnsembleSummary, Simulator};
pub use modulus::{modulus_check, ModulusReport};
pub use perturbation::{bump_gradient, perturbation_magnitude, Gradient, PerturbationReport, PerturbationSettings};
pub use switching_study::{switching_ergodicity_study, SwitchingErgodicityReport, SwitchingErgodicityRow};

#[cfg(test)]
mod tests;
