use super::bounds::arcoth;
use super::{Penalty, SolverError};

/// One asset with impact `lambda`, variance `sigma`, risk aversion `alpha`,
/// dark-pool intensity `theta` and horizon `horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleAsset {
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub horizon: f64,
}

impl SingleAsset {
    pub fn new(lambda: f64, sigma: f64, alpha: f64, theta: f64, horizon: f64) -> Self {
        Self { lambda, sigma, alpha, theta, horizon }
    }

    /// `sqrt(theta^2 + 4 alpha sigma / lambda)`.
    pub fn theta_tilde(&self) -> f64 {
        (self.theta * self.theta + 4.0 * self.alpha * self.sigma / self.lambda).sqrt()
    }

    /// `theta_tilde - theta` without cancellation.
    fn excess_rate(&self) -> f64 {
        let k = 4.0 * self.alpha * self.sigma / self.lambda;
        if k == 0.0 {
            0.0
        } else {
            k / (self.theta_tilde() + self.theta)
        }
    }

    fn degenerate(&self) -> bool {
        self.theta == 0.0 && self.alpha * self.sigma == 0.0
    }

    /// Value coefficient `C(l, t)` or `C(t)`.
    pub fn value(&self, t: f64, penalty: Penalty) -> Result<f64, SolverError> {
        let tau = self.horizon - t;
        let lam = self.lambda;
        match penalty {
            Penalty::Infinite => {
                if !(tau > 0.0) {
                    return Err(SolverError::AtSingularity { t, horizon: self.horizon });
                }
                if self.degenerate() {
                    return Ok(lam / tau);
                }
                let tt = self.theta_tilde();
                Ok(0.5 * lam * (tt * coth_minus_one(0.5 * tt * tau) + self.excess_rate()))
            }
            Penalty::Finite(l) => {
                if tau == 0.0 {
                    return Ok(l);
                }
                if self.degenerate() {
                    return Ok(lam / (tau + lam / l));
                }
                let tt = self.theta_tilde();
                let z = (2.0 * l / lam + self.theta) / tt;
                let arg = 0.5 * tt * tau;
                // ratio - 1, kept separate so small values do not cancel
                let shifted = if z > 1.0 {
                    coth_minus_one(arg + arcoth(z))
                } else if z < 1.0 {
                    -2.0 / ((2.0 * (arg + z.atanh())).exp() + 1.0)
                } else {
                    0.0
                };
                Ok(0.5 * lam * (tt * shifted + self.excess_rate()))
            }
        }
    }

    /// Position under the optimal strategy if no dark-pool fill has occurred
    /// by `t`, starting from `x` at time 0.
    pub fn trajectory_no_fill(&self, t: f64, x: f64) -> f64 {
        let big_t = self.horizon;
        if self.degenerate() {
            return (big_t - t) / big_t * x;
        }
        let tt = self.theta_tilde();
        let a = 0.5 * tt * (big_t - t);
        let b = 0.5 * tt * big_t;
        // sinh(a) / sinh(b) without overflow
        let ratio = if a == 0.0 {
            0.0
        } else {
            (a - b).exp() * (-(-2.0 * a).exp_m1()) / (-(-2.0 * b).exp_m1())
        };
        ratio * (0.5 * self.theta * t).exp() * x
    }

    /// `E[X*(t)]` starting from `x` at time 0.
    pub fn expected_position(&self, t: f64, x: f64) -> f64 {
        (-self.theta * t).exp() * self.trajectory_no_fill(t, x)
    }

    /// `E[X*(t)^2]`.
    pub fn expected_square(&self, t: f64, x: f64) -> f64 {
        let xt = self.trajectory_no_fill(t, x);
        (-self.theta * t).exp() * xt * xt
    }

    /// Primary-venue rate `C(t) x / lambda`.
    pub fn xi(&self, t: f64, x: f64) -> Result<f64, SolverError> {
        Ok(self.value(t, Penalty::Infinite)? / self.lambda * x)
    }

    /// Expected risk cost `alpha sigma int_0^T E[X*^2] dt`.
    pub fn risk_cost(&self, x: f64) -> f64 {
        let k = self.alpha * self.sigma;
        if k == 0.0 {
            return 0.0;
        }
        k * gauss_legendre(|t| self.expected_square(t, x), 0.0, self.horizon)
    }

    /// Expected impact cost `int_0^T lambda (C/lambda)^2 E[X*^2] dt`.
    pub fn impact_cost(&self, x: f64) -> f64 {
        gauss_legendre(
            |t| {
                let c = self.value(t, Penalty::Infinite).unwrap_or(f64::INFINITY) / self.lambda;
                let xt = self.trajectory_no_fill(t, x);
                // c * xt stays bounded as t -> T
                let r = if xt == 0.0 { 0.0 } else { c * xt };
                self.lambda * (-self.theta * t).exp() * r * r
            },
            0.0,
            self.horizon,
        )
    }
}

/// `coth(y) - 1` for `y > 0`.
fn coth_minus_one(y: f64) -> f64 {
    2.0 / (2.0 * y).exp_m1()
}

/// Closed-form `C(l, t)` / `C(t)` for one asset.
pub fn single_asset_closed_form(
    lambda: f64,
    sigma: f64,
    alpha: f64,
    theta: f64,
    horizon: f64,
    t: f64,
    penalty: Penalty,
) -> Result<f64, SolverError> {
    SingleAsset::new(lambda, sigma, alpha, theta, horizon).value(t, penalty)
}

/// Composite 5-point Gauss-Legendre on 256 panels; never evaluates the endpoints.
fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664_0,
        0.906_179_845_938_664_0,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let panels = 256;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}
