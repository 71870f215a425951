//! Market parameters and the derived quantities every other module consumes.

use thiserror::Error;

use crate::linalg::{self, Mat};

/// Symmetry is accepted when `max |A - A^T| <= SYMMETRY_TOL * max |A|`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Positive definiteness: smallest eigenvalue must exceed this times the largest.
pub const DEFINITENESS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{field} has dimension {found}, expected {expected}")]
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    #[error("{field} is not symmetric (relative asymmetry {asymmetry:e})")]
    NonSymmetric { field: &'static str, asymmetry: f64 },
    #[error("lambda is not positive definite (eigenvalue {min_eigenvalue} vs largest {max_eigenvalue})")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },
    #[error("sigma is not nonnegative definite (eigenvalue {min_eigenvalue})")]
    NotNonnegativeDefinite { min_eigenvalue: f64 },
    #[error("{field} must be {requirement}, got {value}")]
    NegativeScalar { field: String, value: f64, requirement: &'static str },
    #[error("{field} contains a non-finite value")]
    NonFinite { field: &'static str },
}

/// Portfolio/market description: impact matrix, covariance, risk aversion,
/// dark-pool execution intensities and the liquidation horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub lambda: Mat,
    pub sigma: Mat,
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub horizon: f64,
}

impl MarketParams {
    /// Builds and validates.
    pub fn new(
        lambda: Mat,
        sigma: Mat,
        alpha: f64,
        theta: Vec<f64>,
        horizon: f64,
    ) -> Result<Self, ValidationError> {
        let p = Self { lambda, sigma, alpha, theta, horizon };
        p.validate()?;
        Ok(p)
    }

    /// Single-asset market.
    pub fn scalar(lambda: f64, sigma: f64, alpha: f64, theta: f64, horizon: f64) -> Self {
        Self {
            lambda: Mat::from_element(1, 1, lambda),
            sigma: Mat::from_element(1, 1, sigma),
            alpha,
            theta: vec![theta],
            horizon,
        }
    }

    /// Two assets with diagonal impact (plus optional cross impact) and
    /// covariance built from volatilities and a correlation.
    #[allow(clippy::too_many_arguments)]
    pub fn two_asset(
        lambda: [f64; 2],
        lambda_12: f64,
        vol: [f64; 2],
        rho: f64,
        alpha: f64,
        theta: [f64; 2],
        horizon: f64,
    ) -> Self {
        let cov = rho * vol[0] * vol[1];
        Self {
            lambda: Mat::from_row_slice(2, 2, &[lambda[0], lambda_12, lambda_12, lambda[1]]),
            sigma: Mat::from_row_slice(2, 2, &[vol[0] * vol[0], cov, cov, vol[1] * vol[1]]),
            alpha,
            theta: theta.to_vec(),
            horizon,
        }
    }

    pub fn n(&self) -> usize {
        self.lambda.nrows()
    }

    /// Checks every standing assumption; reports the first violation found.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.lambda.nrows();
        if n == 0 || self.lambda.ncols() != n {
            return Err(ValidationError::DimensionMismatch {
                field: "lambda",
                expected: n.max(1),
                found: self.lambda.ncols(),
            });
        }
        if self.sigma.nrows() != n || self.sigma.ncols() != n {
            return Err(ValidationError::DimensionMismatch {
                field: "sigma",
                expected: n,
                found: self.sigma.nrows(),
            });
        }
        if self.theta.len() != n {
            return Err(ValidationError::DimensionMismatch {
                field: "theta",
                expected: n,
                found: self.theta.len(),
            });
        }
        if self.lambda.iter().any(|v| !v.is_finite()) {
            return Err(ValidationError::NonFinite { field: "lambda" });
        }
        if self.sigma.iter().any(|v| !v.is_finite()) {
            return Err(ValidationError::NonFinite { field: "sigma" });
        }
        for (field, m) in [("lambda", &self.lambda), ("sigma", &self.sigma)] {
            let asym = linalg::relative_asymmetry(m);
            if asym > SYMMETRY_TOL {
                return Err(ValidationError::NonSymmetric { field, asymmetry: asym });
            }
        }
        let (lmin, lmax) = linalg::sym_extremes(&self.lambda);
        if !(lmin > DEFINITENESS_TOL * lmax) || lmax <= 0.0 {
            return Err(ValidationError::NotPositiveDefinite {
                min_eigenvalue: lmin,
                max_eigenvalue: lmax,
            });
        }
        let (smin, smax) = linalg::sym_extremes(&self.sigma);
        if smin < -DEFINITENESS_TOL * smax.abs().max(smin.abs()) {
            return Err(ValidationError::NotNonnegativeDefinite { min_eigenvalue: smin });
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(ValidationError::NegativeScalar {
                field: "alpha".into(),
                value: self.alpha,
                requirement: "finite and >= 0",
            });
        }
        for (i, &t) in self.theta.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(ValidationError::NegativeScalar {
                    field: format!("theta[{i}]"),
                    value: t,
                    requirement: "finite and >= 0",
                });
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ValidationError::NegativeScalar {
                field: "horizon".into(),
                value: self.horizon,
                requirement: "finite and > 0",
            });
        }
        Ok(())
    }

    /// Validates, then computes [`DerivedQuantities`].
    pub fn derive(&self) -> Result<DerivedQuantities, ValidationError> {
        self.validate()?;
        Ok(DerivedQuantities::compute(self))
    }
}

/// Quantities derived once from validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities {
    /// `sqrt(Lambda^-1) Sigma sqrt(Lambda^-1)`
    pub d_matrix: Mat,
    pub d_min: f64,
    pub d_max: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub theta_sum: f64,
    /// Penalty threshold above which the finite-penalty problem is solved.
    pub l0: f64,
    pub lambda_inv: Mat,
    /// Symmetric square root of `Lambda^-1`.
    pub lambda_inv_sqrt: Mat,
}

impl DerivedQuantities {
    fn compute(p: &MarketParams) -> Self {
        let lambda_inv = linalg::spd_inverse(&p.lambda).expect("validated lambda is SPD");
        let lambda_inv_sqrt = linalg::sym_sqrt(&lambda_inv);
        let d_matrix = linalg::congruence(&lambda_inv_sqrt, &p.sigma);
        let (d_min, d_max) = linalg::sym_extremes(&d_matrix);
        let (d_min, d_max) = (d_min.max(0.0), d_max.max(0.0));
        let (lambda_min, lambda_max) = linalg::sym_extremes(&p.lambda);
        let theta_sum: f64 = p.theta.iter().sum();
        let l0 = penalty_threshold(p.alpha, theta_sum, d_min, d_max, lambda_min, lambda_max);
        Self {
            d_matrix,
            d_min,
            d_max,
            lambda_min,
            lambda_max,
            theta_sum,
            l0,
            lambda_inv,
            lambda_inv_sqrt,
        }
    }

    /// `sqrt(theta^2/4 + alpha d_min)`: rate of the lower bound.
    pub fn lower_rate(&self, alpha: f64) -> f64 {
        (0.25 * self.theta_sum * self.theta_sum + alpha * self.d_min).sqrt()
    }

    /// `sqrt(alpha d_max)`: rate of the upper bound.
    pub fn upper_rate(&self, alpha: f64) -> f64 {
        (alpha * self.d_max).sqrt()
    }
}

/// `max{ lambda_max (sqrt(theta^2/4 + alpha d_min) - theta/2), lambda_min sqrt(alpha d_max) }`
pub fn penalty_threshold(
    alpha: f64,
    theta_sum: f64,
    d_min: f64,
    d_max: f64,
    lambda_min: f64,
    lambda_max: f64,
) -> f64 {
    let a = lambda_max * ((0.25 * theta_sum * theta_sum + alpha * d_min).sqrt() - 0.5 * theta_sum);
    let b = lambda_min * (alpha * d_max).sqrt();
    a.max(b).max(0.0)
}
