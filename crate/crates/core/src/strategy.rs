//! Feedback controls derived from a value path.

use thiserror::Error;

use crate::linalg::{quad_form, spd_inverse, Mat, Vector};
use crate::market::MarketParams;
use crate::solver::{SolverError, ValuePath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("asset index {index} out of range for {n} assets")]
    IndexOutOfRange { index: usize, n: usize },
}

/// `xi`: selling rates on the exchange; `eta`: dark-pool order sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyAction {
    pub t: f64,
    pub x: Vector,
    pub xi: Vector,
    pub eta: Vector,
}

/// `xi = Lambda^-1 C x` and `eta = I~ diag(1/c_ii) C x` for a given `C`.
pub fn action_from_matrix(params: &MarketParams, c: &Mat, t: f64, x: &Vector) -> StrategyAction {
    let lambda_inv = spd_inverse(&params.lambda).expect("validated impact matrix");
    let cx = c * x;
    let xi = &lambda_inv * &cx;
    let eta = Vector::from_fn(x.len(), |i, _| if params.theta[i] > 0.0 { cx[i] / c[(i, i)] } else { 0.0 });
    StrategyAction { t, x: x.clone(), xi, eta }
}

pub fn action(
    path: &ValuePath,
    params: &MarketParams,
    t: f64,
    x: &Vector,
) -> Result<StrategyAction, SolverError> {
    let c = path.evaluate(t)?;
    Ok(action_from_matrix(params, &c, t, x))
}

/// Position after asset `i`'s dark-pool order executes.
pub fn post_jump_position(
    x: &Vector,
    action: &StrategyAction,
    i: usize,
) -> Result<Vector, StrategyError> {
    if i >= x.len() || i >= action.eta.len() {
        return Err(StrategyError::IndexOutOfRange { index: i, n: x.len() });
    }
    let mut out = x.clone();
    out[i] -= action.eta[i];
    Ok(out)
}

/// Scan minimum of `eta -> v(t, x - eta e_i)` minus its value at the analytic
/// minimiser `(C x)_i / c_ii`. The minimiser is taken without the `theta_i = 0`
/// mask, so the result is meaningful for every asset.
pub fn axis_optimality_gap(
    path: &ValuePath,
    params: &MarketParams,
    t: f64,
    x: &Vector,
    i: usize,
) -> Result<f64, StrategyError> {
    if i >= params.n() {
        return Err(StrategyError::IndexOutOfRange { index: i, n: params.n() });
    }
    let c = path.evaluate(t)?;
    Ok(axis_gap_for_matrix(&c, x, i))
}

pub(crate) fn axis_gap_for_matrix(c: &Mat, x: &Vector, i: usize) -> f64 {
    let eta_star = (c * x)[i] / c[(i, i)];
    let v = |eta: f64| {
        let mut y = x.clone();
        y[i] -= eta;
        quad_form(c, &y)
    };
    let radius = 5.0 * x.norm();
    let points = 2001;
    let scan_min = (0..points)
        .map(|k| -radius + 2.0 * radius * k as f64 / (points - 1) as f64)
        .map(v)
        .fold(f64::INFINITY, f64::min);
    scan_min - v(eta_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{principal_solution, GridSpec, LadderSpec};

    fn pair(rho: f64) -> MarketParams {
        MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], rho, 4.0, [0.5, 5.0], 1.0)
    }

    #[test]
    fn single_asset_order_is_whole_position() {
        let p = MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0);
        let c = Mat::from_element(1, 1, 1.37);
        for x in [1.0, -2.5, 1e-3] {
            let a = action_from_matrix(&p, &c, 0.2, &Vector::from_element(1, x));
            assert_eq!(a.eta[0], x);
            assert_eq!(post_jump_position(&a.x, &a, 0).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn masked_asset_keeps_position() {
        let p = MarketParams::two_asset([1.0, 1.0], 0.0, [1.0, 1.0], 0.3, 1.0, [0.0, 2.0], 1.0);
        let c = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let x = Vector::from_vec(vec![1.0, 1.0]);
        let a = action_from_matrix(&p, &c, 0.0, &x);
        assert_eq!(a.eta[0], 0.0);
        assert_eq!(post_jump_position(&x, &a, 0).unwrap(), x);
        assert!(matches!(post_jump_position(&x, &a, 2), Err(StrategyError::IndexOutOfRange { .. })));
    }

    #[test]
    fn pair_jump_lands_on_ratio() {
        let p = pair(0.4);
        let c = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let x = Vector::from_vec(vec![1.0, 1.0]);
        let a = action_from_matrix(&p, &c, 0.0, &x);
        assert!((a.eta[0] - (1.0 + 0.3 / 2.0)).abs() < 1e-15);
        let y = post_jump_position(&x, &a, 0).unwrap();
        assert!((y[0] + 0.3 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_principal_rate_is_uniform() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let d = p.derive().unwrap();
        let path = principal_solution(&p, &d, &GridSpec::default(), &LadderSpec::default()).unwrap();
        let a = action(&path, &p, 0.0, &Vector::from_element(1, 1.0)).unwrap();
        assert!((a.xi[0] - 1.0).abs() < 1e-6);
        assert!(matches!(action(&path, &p, 0.9995, &a.x), Err(SolverError::OutOfGridRange { .. })));
    }

    #[test]
    fn uncorrelated_pair_orders_match_positions() {
        let p = pair(0.0);
        let d = p.derive().unwrap();
        let path = principal_solution(&p, &d, &GridSpec::with_steps(1024), &LadderSpec::default()).unwrap();
        let a = action(&path, &p, 0.0, &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((a.eta[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_gap_is_tiny() {
        let c = Mat::from_row_slice(3, 3, &[3.0, 0.5, -0.2, 0.5, 2.0, 0.1, -0.2, 0.1, 1.0]);
        let x = Vector::from_vec(vec![0.7, -1.2, 0.4]);
        for i in 0..3 {
            let g = axis_gap_for_matrix(&c, &x, i);
            let step = 10.0 * x.norm() / 2000.0;
            assert!(g >= -1e-9 && g <= c[(i, i)] * step * step, "{g}");
        }
    }
}
