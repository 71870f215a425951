use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::quad_flat;
use crate::market::{DerivedQuantities, MarketParams};

use super::bounds::{bounds_finite, bounds_limit};
use super::ivp::{check_sandwich, Integrator};
use super::path::{Penalty, ValuePath};
use super::{GridSpec, SolverError};

/// Geometric penalty ladder `l_0' * factor^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSpec {
    /// First rung; `None` means `max(2 l0, 1)`.
    pub start: Option<f64>,
    pub factor: f64,
    pub tol: f64,
    pub max_rungs: usize,
    /// Random directions used for the monotonicity assertion.
    pub probes: usize,
    pub probe_seed: u64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self { start: None, factor: 4.0, tol: 1e-6, max_rungs: 20, probes: 16, probe_seed: 7 }
    }
}

/// One completed rung of the ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RungRecord {
    pub l: f64,
    /// `max |C(l_k) - C(l_{k-1})| / (1 + |C(l_{k-1})|)` over grid and entries;
    /// infinite on the first rung.
    pub max_change: f64,
    /// `x^T C(l, 0) x` for the first probe direction.
    pub probe_value: f64,
}

const MONOTONE_TOL: f64 = 1e-9;

/// The `l -> infinity` limit on `[0, T - delta_cut]`, obtained by climbing
/// the penalty ladder until successive rungs agree to `ladder.tol`.
pub fn principal_solution(
    params: &MarketParams,
    derived: &DerivedQuantities,
    grid: &GridSpec,
    ladder: &LadderSpec,
) -> Result<ValuePath, SolverError> {
    grid.validate()?;
    let n = params.n();
    let horizon = params.horizon;
    let delta = grid.delta_cut(horizon);
    let taus = grid.tau_knots(horizon, delta, 0.0);
    let ts: Vec<f64> = taus.iter().map(|tau| horizon - tau).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(ladder.probe_seed);
    let probes: Vec<Vec<f64>> = (0..ladder.probes.max(1))
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();

    let mut l = ladder.start.unwrap_or((2.0 * derived.l0).max(1.0));
    if !(l > derived.l0) {
        return Err(SolverError::PenaltyTooSmall { l, l0: derived.l0 });
    }
    let mut trace = Vec::new();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut last_change = f64::INFINITY;
    for rung in 0..ladder.max_rungs {
        let mut integ = Integrator::new(params, derived);
        let mats = integ.run(l, &taus, derived.lambda_min, horizon, grid.substeps)?;
        check_sandwich(derived, &ts, &mats, |t| bounds_finite(params, derived, l, t))?;

        let mut change = f64::INFINITY;
        if let Some(old) = &prev {
            change = 0.0;
            for (k, (a, b)) in old.iter().zip(&mats).enumerate() {
                for (x, y) in a.iter().zip(b) {
                    change = change.max((y - x).abs() / (1.0 + x.abs()));
                }
                for x in &probes {
                    let lower = quad_flat(n, a, x);
                    let upper = quad_flat(n, b, x);
                    if upper < lower - MONOTONE_TOL * lower.abs().max(1e-300) {
                        return Err(SolverError::MonotonicityViolated {
                            t: ts[k],
                            rung,
                            lower: upper,
                            upper: lower,
                        });
                    }
                }
            }
        }
        // knot order is ascending tau, so t = 0 is last
        let probe_value = quad_flat(n, mats.last().unwrap(), &probes[0]);
        trace.push(RungRecord { l, max_change: change, probe_value });
        last_change = change;
        if change < ladder.tol {
            check_sandwich(derived, &ts, &mats, |t| bounds_limit(params, derived, t))?;
            let mut path =
                ValuePath::from_tau_order(n, horizon, ts, mats, Penalty::Infinite, delta, integ.stats);
            path.ladder = trace;
            return Ok(path);
        }
        prev = Some(mats);
        l *= ladder.factor;
    }
    Err(SolverError::LadderExhausted { rungs: ladder.max_rungs, last_change })
}
