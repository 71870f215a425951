use crate::checks::CheckReport;
use crate::linalg::{quad_flat, to_flat};
use crate::market::{DerivedQuantities, MarketParams};
use crate::solver::bounds_limit;

use super::Trajectory;

// the degenerate case saturates the envelope, so the slack must cover the
// ladder truncation of the value matrix (relative 1e-6 in the rate)
const REL_TOL: f64 = 1e-5;

/// Upper envelope for `X(s)^T Lambda X(s)` given the fills before `s`.
pub fn liquidation_envelope(
    params: &MarketParams,
    derived: &DerivedQuantities,
    x0: &[f64],
    t0: f64,
    s: f64,
    fill_times: &[f64],
) -> f64 {
    let big_t = params.horizon;
    let lam = to_flat(&params.lambda);
    let base = quad_flat(params.n(), &lam, x0);
    let decay = ((big_t - s) / (big_t - t0)).powi(2);
    let mut prod = 1.0;
    for &tau in fill_times {
        // bounds_limit only fails at t >= T, which fills never reach
        if let Ok(b) = bounds_limit(params, derived, tau) {
            prod *= b.q / b.p;
        }
    }
    base * (derived.theta_sum * (s - t0)).exp() * decay * prod
}

/// Checks the envelope at every recorded sample, the end state included.
pub fn liquidation_check(traj: &Trajectory, params: &MarketParams, derived: &DerivedQuantities) -> CheckReport {
    let mut report = CheckReport::new("liquidation_envelope", REL_TOL);
    let n = params.n();
    let lam = to_flat(&params.lambda);
    let mut fills: Vec<f64> = Vec::new();
    let mut factors = 0usize;
    for row in &traj.samples {
        let lhs = quad_flat(n, &lam, &row.x);
        let rhs = liquidation_envelope(params, derived, &traj.x0, traj.t0, row.t, &fills);
        let scale = rhs.max(1e-300);
        report.record((rhs - lhs) / scale, || {
            format!("t = {:.6}, X'LX = {lhs:.6e} > envelope {rhs:.6e}, fills {}", row.t, fills.len())
        });
        if row.jump_asset.is_some() {
            fills.push(row.t);
            factors += 1;
        }
    }
    let lhs = quad_flat(n, &lam, &traj.x_end);
    let rhs = liquidation_envelope(params, derived, &traj.x0, traj.t0, traj.end_time, &fills);
    report.record((rhs - lhs) / rhs.max(1e-300), || {
        format!("end t = {:.6}: X'LX = {lhs:.6e} > envelope {rhs:.6e}", traj.end_time)
    });
    report.note(format!("{factors} fill factors"));
    report
}
