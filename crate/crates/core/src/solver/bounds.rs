use crate::market::{DerivedQuantities, MarketParams};

use super::SolverError;

/// Scalar envelope `p I <= sqrt(Lambda^-1) C sqrt(Lambda^-1) <= q I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub p: f64,
    pub q: f64,
}

/// `arcoth(z)` for `z > 1`, accurate for large `z`.
pub(crate) fn arcoth(z: f64) -> f64 {
    0.5 * (2.0 / (z - 1.0)).ln_1p()
}

pub(crate) fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// Bounds of the finite-penalty solution `C(l, t)`.
pub fn bounds_finite(
    params: &MarketParams,
    derived: &DerivedQuantities,
    l: f64,
    t: f64,
) -> Result<BoundPair, SolverError> {
    if !(l > derived.l0) || !(l > 0.0) {
        return Err(SolverError::PenaltyTooSmall { l, l0: derived.l0 });
    }
    let tau = params.horizon - t;
    let theta = derived.theta_sum;
    let g = derived.lower_rate(params.alpha);
    let p = if theta == 0.0 && params.alpha * derived.d_min == 0.0 {
        1.0 / (tau + derived.lambda_max / l)
    } else {
        let kappa1 = arcoth((l / derived.lambda_max + 0.5 * theta) / g);
        g * coth(g * tau + kappa1) - 0.5 * theta
    };
    let h = derived.upper_rate(params.alpha);
    let q = if h == 0.0 {
        1.0 / (tau + derived.lambda_min / l)
    } else {
        let kappa2 = arcoth(l / (derived.lambda_min * h));
        h * coth(h * tau + kappa2)
    };
    Ok(BoundPair { p, q })
}

/// Limits of [`bounds_finite`] as the penalty grows without bound; singular at `T`.
pub fn bounds_limit(
    params: &MarketParams,
    derived: &DerivedQuantities,
    t: f64,
) -> Result<BoundPair, SolverError> {
    let tau = params.horizon - t;
    if !(tau > 0.0) {
        return Err(SolverError::AtSingularity { t, horizon: params.horizon });
    }
    let theta = derived.theta_sum;
    let g = derived.lower_rate(params.alpha);
    let p = if theta == 0.0 && params.alpha * derived.d_min == 0.0 {
        1.0 / tau
    } else {
        g * coth(g * tau) - 0.5 * theta
    };
    let h = derived.upper_rate(params.alpha);
    let q = if h == 0.0 { 1.0 / tau } else { h * coth(h * tau) };
    Ok(BoundPair { p, q })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_case() -> (MarketParams, DerivedQuantities) {
        let p = MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0);
        let d = p.derive().unwrap();
        (p, d)
    }

    fn rk4_scalar(f: impl Fn(f64) -> f64, y_end: f64, span: f64, steps: usize) -> f64 {
        // integrates y' = f(y) backward over `span`
        let h = -span / steps as f64;
        let mut y = y_end;
        for _ in 0..steps {
            let k1 = f(y);
            let k2 = f(y + 0.5 * h * k1);
            let k3 = f(y + 0.5 * h * k2);
            let k4 = f(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    #[test]
    fn degenerate_rational_form() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let d = p.derive().unwrap();
        let b = bounds_finite(&p, &d, 1.0, 0.0).unwrap();
        assert!((b.p - 0.5).abs() < 1e-15 && (b.q - 0.5).abs() < 1e-15);
        let b = bounds_finite(&p, &d, 7.0, 1.0).unwrap();
        assert!((b.p - 7.0).abs() < 1e-12 && (b.q - 7.0).abs() < 1e-12);
    }

    #[test]
    fn terminal_values_are_penalty_over_lambda() {
        let p = MarketParams::two_asset([2.0, 0.5], 0.0, [1.0, 1.0], 0.3, 2.0, [1.0, 2.0], 1.0);
        let d = p.derive().unwrap();
        let l = 10.0 * d.l0 + 1.0;
        let b = bounds_finite(&p, &d, l, 1.0).unwrap();
        assert!((b.p - l / 2.0).abs() < 1e-9 * l);
        assert!((b.q - l / 0.5).abs() < 1e-9 * l);
    }

    #[test]
    fn scalar_case_lower_bound_matches_ivp() {
        let (p, d) = scalar_case();
        let b = bounds_finite(&p, &d, 10.0, 0.0).unwrap();
        // sqrt(10) coth(sqrt(10) + arcoth(12/sqrt(10))) - 2
        assert!((b.p - 1.168_889_772_610_480).abs() < 1e-12);
        let ivp = rk4_scalar(|y| y * y + 4.0 * y - 6.0, 10.0, 1.0, 20_000);
        assert!((b.p - ivp).abs() < 1e-9);
        let ivp_q = rk4_scalar(|y| y * y - 6.0, 10.0, 1.0, 20_000);
        assert!((b.q - ivp_q).abs() < 1e-9);
    }

    #[test]
    fn rejects_small_penalty() {
        let (p, d) = scalar_case();
        assert!(matches!(bounds_finite(&p, &d, 2.0, 0.0), Err(SolverError::PenaltyTooSmall { .. })));
    }

    #[test]
    fn limits() {
        let p = MarketParams::scalar(1.0, 0.0, 0.0, 0.0, 1.0);
        let d = p.derive().unwrap();
        let b = bounds_limit(&p, &d, 0.0).unwrap();
        assert_eq!((b.p, b.q), (1.0, 1.0));
        assert!(matches!(bounds_limit(&p, &d, 1.0), Err(SolverError::AtSingularity { .. })));

        let (p, d) = scalar_case();
        let b = bounds_limit(&p, &d, 0.0).unwrap();
        assert!((b.p - 1.173_630_104_219_688_6).abs() < 1e-12);
        assert!((b.q - 2.486_281_904_150_828_5).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 0..100 {
            let t = 1.0 - 0.5f64.powi(k / 5) * (1.0 - k as f64 / 120.0);
            if t >= 1.0 {
                break;
            }
            let b = bounds_limit(&p, &d, t).unwrap();
            assert!(b.p >= prev && b.q >= b.p);
            prev = b.p;
        }
    }

    #[test]
    fn finite_bounds_increase_to_limit() {
        let (p, d) = scalar_case();
        let lim = bounds_limit(&p, &d, 0.3).unwrap();
        let mut prev = BoundPair { p: 0.0, q: 0.0 };
        for k in 0..30 {
            let l = 3.0 * 2f64.powi(k);
            let b = bounds_finite(&p, &d, l, 0.3).unwrap();
            assert!(b.p >= prev.p && b.q >= prev.q);
            assert!(b.p <= lim.p + 1e-12 && b.q <= lim.q + 1e-12);
            prev = b;
        }
        assert!((prev.p - lim.p).abs() < 1e-8);
    }
}
