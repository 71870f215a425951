#![allow(dead_code)]

use darkpool::checks::random_spd;
use darkpool::linalg::{sym_extremes, Mat};
use darkpool::market::MarketParams;
use rand::Rng;

/// Random valid market: impact eigenvalues in roughly [0.2, 5], covariance
/// possibly rank deficient, some dark pools switched off.
pub fn random_market(n: usize, rng: &mut impl Rng) -> MarketParams {
    let a = random_spd(n, rng);
    let (lo, hi) = sym_extremes(&a);
    let target: f64 = rng.random_range(0.3..4.0);
    let lambda = (&a - Mat::identity(n, n) * lo) * (target / (hi - lo).max(1e-12)) + Mat::identity(n, n) * rng.random_range(0.2..1.0);
    let rank = rng.random_range(0..=n);
    let b = Mat::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
    let sigma = b.transpose() * b;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let theta = (0..n).map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random_range(0.05..5.0) }).collect();
    MarketParams {
        lambda: (&lambda + lambda.transpose()) * 0.5,
        sigma,
        alpha: rng.random_range(0.0..5.0),
        theta,
        horizon: rng.random_range(0.5..2.0),
    }
}

pub fn scalar_case() -> MarketParams {
    MarketParams::scalar(1.0, 1.0, 6.0, 4.0, 1.0)
}

pub fn pair_case(rho: f64) -> MarketParams {
    MarketParams::two_asset([3.0, 0.2], 0.0, [1.0, 1.0], rho, 4.0, [0.5, 3.0], 1.0)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
