use rayon::prelude::*;

use crate::market::MarketParams;
use crate::sim::{draw_jumps, Engine, JumpSchedule, Trajectory};
use crate::solver::ValuePath;

use super::CheckReport;

/// Relative slack for sign assertions on controls, which vanish exactly
/// right after a fill.
const SIGN_TOL: f64 = 1e-9;

/// Starting position simulated over `seeds` jump schedules (plus one
/// schedule without fills).
#[derive(Debug, Clone, PartialEq)]
pub struct StructureScenario {
    pub x0: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
}

impl StructureScenario {
    pub fn new(x0: Vec<f64>, seeds: usize, base_seed: u64) -> Self {
        Self { x0, seeds, base_seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Diversification {
    Well,
    Poor,
    Uncorrelated,
}

/// Classification of a two-asset position; `None` when a component is 0.
pub(crate) fn classify(params: &MarketParams, x: &[f64]) -> Option<Diversification> {
    let rho = params.sigma[(0, 1)];
    if x[0] == 0.0 || x[1] == 0.0 {
        return None;
    }
    if rho == 0.0 {
        return Some(Diversification::Uncorrelated);
    }
    let same = x[0].signum() == x[1].signum();
    Some(if same == (rho < 0.0) { Diversification::Well } else { Diversification::Poor })
}

/// `(xi, eta)` at `(t, x)` from the interpolated value matrix.
pub(crate) fn controls(path: &ValuePath, params: &MarketParams, lambda_inv: &[f64], t: f64, x: &[f64], c: &mut [f64]) -> ([f64; 2], [f64; 2], f64) {
    path.interpolate_into(t, c).expect("sample times lie on the path");
    let cx = [c[0] * x[0] + c[1] * x[1], c[2] * x[0] + c[3] * x[1]];
    let xi = [lambda_inv[0] * cx[0] + lambda_inv[1] * cx[1], lambda_inv[2] * cx[0] + lambda_inv[3] * cx[1]];
    let mut eta = [0.0; 2];
    for i in 0..2 {
        if params.theta[i] > 0.0 {
            eta[i] = cx[i] / c[i * 3];
        }
    }
    let norm = c.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * x[0].hypot(x[1]);
    (xi, eta, norm)
}

/// Index of the first sample where some component has lost the sign of `x0`
/// (or hit zero); `samples.len()` if none has.
pub(crate) fn first_sign_change(traj: &Trajectory) -> usize {
    let x0 = &traj.x0;
    traj.samples
        .iter()
        .position(|s| (0..2).any(|i| s.x[i] * x0[i].signum() <= 0.0))
        .unwrap_or(traj.samples.len())
}

/// Post-fill sign of every dark-pool order before the first sign change:
/// kept for `keep`, flipped (or zero) otherwise.
pub(crate) fn check_order_sizes(
    report: &mut CheckReport,
    path: &ValuePath,
    params: &MarketParams,
    lambda_inv: &[f64],
    traj: &Trajectory,
    keep: bool,
) {
    let mut c = [0.0; 4];
    let stop = first_sign_change(traj);
    for s in &traj.samples[..stop] {
        let (_, eta, _) = controls(path, params, lambda_inv, s.t, &s.x, &mut c);
        let scale = s.x[0].hypot(s.x[1]);
        for i in 0..2 {
            if params.theta[i] == 0.0 {
                continue;
            }
            let post = (s.x[i] - eta[i]) * traj.x0[i].signum() / scale;
            let margin = if keep { post } else { -post };
            report.record(margin, || {
                format!(
                    "seed {:?}, t = {:.6}, x = {:?}: order in asset {} leaves {:.6e}",
                    traj.seed,
                    s.t,
                    s.x,
                    i + 1,
                    s.x[i] - eta[i]
                )
            });
        }
    }
}

fn check_path(report: &mut CheckReport, path: &ValuePath, params: &MarketParams, lambda_inv: &[f64], traj: &Trajectory) {
    let x0 = &traj.x0;
    let seed = traj.seed;
    match classify(params, x0) {
        Some(Diversification::Well) => {
            // every component keeps its sign up to the end of the path
            let states = traj.samples.iter().map(|s| (s.t, &s.x)).chain(std::iter::once((traj.end_time, &traj.x_end)));
            for (t, x) in states {
                for i in 0..2 {
                    let ok = x[i] * x0[i].signum() > 0.0;
                    report.expect(ok, || format!("seed {seed:?}, t = {t:.6}: x = {x:?} left the sign of {x0:?}"));
                }
            }
        }
        Some(Diversification::Poor) => {
            check_order_sizes(report, path, params, lambda_inv, traj, false);
            let stop = first_sign_change(traj);
            let stop_t = traj.samples.get(stop).map_or(f64::INFINITY, |s| s.t);
            if let Some(j) = traj.jumps.first().filter(|j| j.t <= stop_t) {
                let ok = j.after[j.asset] * x0[j.asset].signum() <= 0.0;
                report.expect(ok, || format!("seed {seed:?}: first fill at {:.6} left {:?}", j.t, j.after));
            }
        }
        Some(Diversification::Uncorrelated) => {
            for j in &traj.jumps {
                report.expect(j.after[j.asset] == 0.0, || {
                    format!("seed {seed:?}: uncorrelated fill at {:.6} left {:?}", j.t, j.after)
                });
            }
        }
        None => {}
    }

    // after the first fill, controls point toward zero or vanish
    let Some(first) = traj.samples.iter().position(|s| s.jump_asset.is_some()) else {
        return;
    };
    let mut c = [0.0; 4];
    for s in &traj.samples[first + 1..] {
        let (xi, eta, norm) = controls(path, params, lambda_inv, s.t, &s.x, &mut c);
        if norm == 0.0 {
            continue;
        }
        for i in 0..2 {
            let sg = s.x[i].signum();
            let (mx, me) = if s.x[i] == 0.0 {
                (-xi[i].abs() * params.lambda[(i, i)] / norm, -eta[i].abs() * c[i * 3] / norm)
            } else {
                (xi[i] * sg * params.lambda[(i, i)] / norm, eta[i] * sg * c[i * 3] / norm)
            };
            report.record(mx.min(me), || {
                format!(
                    "seed {seed:?}, t = {:.6}, x = {:?}: asset {} trades away from zero (xi {:.3e}, eta {:.3e})",
                    s.t,
                    s.x,
                    i + 1,
                    xi[i],
                    eta[i]
                )
            });
        }
    }
}

/// Simulates every scenario under the optimal strategy and checks the sign
/// structure of positions, orders and controls. Needs two assets with
/// diagonal impact and the principal `path` for `params`.
pub fn check_trajectory_structure(
    params: &MarketParams,
    path: &ValuePath,
    scenarios: &[StructureScenario],
    ode_step_divisor: usize,
) -> CheckReport {
    let mut report = CheckReport::new("trajectory_structure", SIGN_TOL);
    if params.n() != 2 || params.lambda[(0, 1)] != 0.0 {
        report.fail("requires two assets with diagonal impact");
        return report;
    }
    let engine = match Engine::new(path, params, None, ode_step_divisor) {
        Ok(e) => e,
        Err(e) => {
            report.fail(e.to_string());
            return report;
        }
    };
    let lambda_inv = [1.0 / params.lambda[(0, 0)], 0.0, 0.0, 1.0 / params.lambda[(1, 1)]];
    for sc in scenarios {
        let parts: Vec<CheckReport> = (0..=sc.seeds)
            .into_par_iter()
            .map(|k| {
                let mut r = CheckReport::new("trajectory_structure", SIGN_TOL);
                // k = 0 is the path without fills
                let (schedule, seed) = if k == 0 {
                    (JumpSchedule::empty(), None)
                } else {
                    let seed = sc.base_seed.wrapping_add(k as u64 - 1);
                    (draw_jumps(&params.theta, 0.0, params.horizon, seed), Some(seed))
                };
                match engine.trajectory(&sc.x0, 0.0, &schedule, seed) {
                    Ok(traj) => check_path(&mut r, path, params, &lambda_inv, &traj),
                    Err(e) => r.fail(format!("seed {seed:?}: {e}")),
                }
                r
            })
            .collect();
        for p in &parts {
            report.absorb(p);
        }
        let class = classify(params, &sc.x0).map_or("degenerate".to_string(), |c| format!("{c:?}").to_lowercase());
        report.note(format!("x0 = {:?} ({class}), {} seeds from {}", sc.x0, sc.seeds, sc.base_seed));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{principal_solution, GridSpec, LadderSpec};

    fn pair_case(rho: f64) -> (MarketParams, ValuePath) {
        let p = MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], rho, 4.0, [0.5, 3.0], 1.0);
        let d = p.derive().unwrap();
        let path = principal_solution(&p, &d, &GridSpec::with_steps(1024), &LadderSpec::default()).unwrap();
        (p, path)
    }

    #[test]
    fn classification() {
        let (p, _) = pair_case(0.9);
        assert_eq!(classify(&p, &[1.0, -1.0]), Some(Diversification::Well));
        assert_eq!(classify(&p, &[1.0, 1.0]), Some(Diversification::Poor));
        assert_eq!(classify(&p, &[0.0, 1.0]), None);
        let q = MarketParams { sigma: crate::linalg::Mat::identity(2, 2), ..p };
        assert_eq!(classify(&q, &[1.0, 1.0]), Some(Diversification::Uncorrelated));
    }

    #[test]
    fn pair_case_structure_small() {
        let (p, path) = pair_case(0.9);
        let sc = [StructureScenario::new(vec![1.0, -1.0], 40, 100), StructureScenario::new(vec![1.0, 1.0], 40, 100)];
        let r = check_trajectory_structure(&p, &path, &sc, 1);
        assert!(r.passed, "{:?}", r.witness);
        assert!(r.samples > 1000);
    }

    #[test]
    fn uncorrelated_fills_hit_zero() {
        let (p, path) = pair_case(0.0);
        let r = check_trajectory_structure(&p, &path, &[StructureScenario::new(vec![1.0, 1.0], 30, 5)], 1);
        assert!(r.passed, "{:?}", r.witness);
    }

    #[test]
    fn cross_impact_is_refused() {
        let p = MarketParams::two_asset([1.0, 1.0], 0.2, [1.0, 1.0], 0.5, 1.0, [1.0, 1.0], 1.0);
        let d = p.derive().unwrap();
        let path = principal_solution(&p, &d, &GridSpec::with_steps(256), &LadderSpec::default()).unwrap();
        let r = check_trajectory_structure(&p, &path, &[], 1);
        assert!(!r.passed);
    }
}
