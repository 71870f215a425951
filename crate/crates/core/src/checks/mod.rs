//! Numerical oracles for the structural properties of the value function,
//! the strategy and the simulated dynamics.

mod battery;
mod figures;
mod matrix;
mod report;
mod riccati;
mod statics;
mod structure;

pub use battery::{run_battery, BatteryConfig};
pub use figures::{check_correlation_figure, CorrelationFigure};
pub use matrix::{
    check_diagonal_bounds, check_matrix_inequality, diagonal_bounds_battery, matrix_inequality_battery,
    random_spd,
};
pub use report::{render_table, CheckReport};
pub use riccati::{
    check_riccati_comparison, check_scalar_riccati_bound, check_value_bounds_construction, random_riccati_spec,
    riccati_battery, scalar_riccati_bound_battery, RiccatiSpec,
};
pub use statics::{
    check_cross_impact, check_single_asset_statics, check_two_asset_statics, SingleAssetSweep, TwoAssetSweep,
};
pub use structure::{check_trajectory_structure, StructureScenario};

use thiserror::Error;

/// Required relative gap between grid neighbours where a strict monotonicity
/// is asserted; non-strict comparisons accept the same amount of slack.
pub const STRICT_REL_GAP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("input matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    InputNotSPD { min_eigenvalue: f64 },
    #[error("comparison premise violated: {0}")]
    HypothesisViolated(String),
}

