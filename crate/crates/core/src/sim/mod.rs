//! Monte Carlo simulation of the controlled position: deterministic flow
//! between dark-pool fills, jumps at Poisson times, and cost accounting.

mod engine;
mod jumps;
mod liquidation;
mod mc;

pub use engine::{perturbation_tag, Engine, JumpRecord, PathCosts, Perturbation, Sample, Trajectory, Workspace};
pub use jumps::{draw_jumps, JumpSchedule};
pub use liquidation::{liquidation_check, liquidation_envelope};
pub use mc::{compare_strategies, monte_carlo_value, pairwise_sum, McEstimate, PairedComparison};

use thiserror::Error;

use crate::market::MarketParams;
use crate::solver::{SolverError, ValuePath};

/// Default number of RK4 steps per grid interval.
pub const DEFAULT_STEP_DIVISOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid jump schedule: {0}")]
    BadSchedule(String),
    #[error("need at least {0} paths")]
    TooFewPaths(usize),
}

/// Simulates the optimal strategy along one jump schedule. `ode_step_divisor`
/// sets the RK4 step as grid spacing divided by it.
pub fn simulate(
    path: &ValuePath,
    params: &MarketParams,
    x0: &[f64],
    t0: f64,
    schedule: &JumpSchedule,
    ode_step_divisor: usize,
) -> Result<Trajectory, SimError> {
    Engine::new(path, params, None, ode_step_divisor)?.trajectory(x0, t0, schedule, None)
}
