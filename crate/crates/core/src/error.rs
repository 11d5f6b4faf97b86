use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("generator is not weakly irreducible{location}: {detail}")]
    NotWeaklyIrreducible { location: String, detail: String },

    #[error("no generator segment covers t = {t}")]
    ScheduleGap { t: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite state at node {node} (t = {t})")]
    NonFinite { node: usize, t: f64 },

    #[error("time step {dt} exceeds the fast scale epsilon = {eps}")]
    StepTooCoarse { dt: f64, eps: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue})")]
    NotPsd { eigenvalue: f64 },

    #[error("query x = {x:?} leaves the tabulated box")]
    GridExtrapolation { x: Vec<f64> },

    #[error("sample counts differ: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("nested Monte Carlo budget {requested} exceeds cap {cap}")]
    BudgetExceeded { requested: usize, cap: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
