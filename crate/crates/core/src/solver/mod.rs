//! Value-function matrix: the finite-penalty matrix IVP, its closed-form
//! bounds, the l -> infinity principal solution and the single-asset
//! closed forms.

mod bounds;
mod closed_form;
mod grid;
mod ivp;
mod path;
mod principal;

pub use bounds::{bounds_finite, bounds_limit, BoundPair};
pub use closed_form::{single_asset_closed_form, SingleAsset};
pub use grid::GridSpec;
pub use ivp::{matrix_rhs, solve_finite_penalty, SolveStats};
pub use path::{evaluate_c, fmt_num, Penalty, ValuePath};
pub use principal::{principal_solution, LadderSpec, RungRecord};

use thiserror::Error;

use crate::market::ValidationError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("penalty {l} does not exceed the threshold l0 = {l0}")]
    PenaltyTooSmall { l: f64, l0: f64 },
    #[error("time {t} is at or beyond the terminal singularity T = {horizon}")]
    AtSingularity { t: f64, horizon: f64 },
    #[error("value matrix lost positive definiteness at t = {t} (penalty {l})")]
    PositivityLost { t: f64, l: f64 },
    #[error("step size fell below the floor {floor:e} at t = {t} (penalty {l})")]
    StepFloorReached { t: f64, l: f64, floor: f64 },
    #[error("t = {t} outside path grid [{start}, {end}]")]
    OutOfGridRange { t: f64, start: f64, end: f64 },
    #[error("sandwich bound violated at t = {t}: eigenvalue {eigenvalue} outside [{p}, {q}]")]
    SandwichViolated { t: f64, eigenvalue: f64, p: f64, q: f64 },
    #[error("value not monotone in penalty at t = {t}: {lower} after {upper} (rung {rung})")]
    MonotonicityViolated { t: f64, rung: usize, lower: f64, upper: f64 },
    #[error("penalty ladder did not converge within {rungs} rungs (last change {last_change:e})")]
    LadderExhausted { rungs: usize, last_change: f64 },
    #[error("invalid grid specification: {0}")]
    BadGrid(String),
}
