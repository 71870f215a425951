use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{quad_form, Vector};

use super::engine::{perturbation_tag, Engine, PathCosts, Workspace};
use super::{draw_jumps, Perturbation, SimError, DEFAULT_STEP_DIVISOR};
use crate::market::MarketParams;
use crate::solver::ValuePath;

/// Monte Carlo cost estimate.
///
/// `mean` averages the simulated cost (impact + risk, plus the terminal
/// penalty for a finite-penalty path). Principal paths stop at `T - delta`;
/// `remainder_mean` is the average optimal cost of the position left there
/// and `remainder_bound_mean` its certified upper bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub tag: String,
    pub n_paths: usize,
    pub mean: f64,
    pub std_error: f64,
    pub analytic_value: f64,
    pub impact_mean: f64,
    pub risk_mean: f64,
    pub remainder_mean: f64,
    pub remainder_bound_mean: f64,
    /// `mean + remainder_mean` with its own standard error.
    pub total_mean: f64,
    pub total_std_error: f64,
}

impl McEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serialises")
    }
}

/// Paired comparison of a comparator against the optimum under common
/// random numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub optimal: McEstimate,
    pub perturbed: McEstimate,
    /// Mean of per-path `total(perturbed) - total(optimal)`.
    pub mean_difference: f64,
    pub difference_std_error: f64,
}

impl PairedComparison {
    /// Difference in units of its standard error (infinite when exact).
    pub fn z_score(&self) -> f64 {
        if self.difference_std_error > 0.0 {
            self.mean_difference / self.difference_std_error
        } else if self.mean_difference >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Mean and standard error, shifted by the first sample so that identical
/// samples give exactly zero error.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let shift = v[0];
    let d: Vec<f64> = v.iter().map(|x| x - shift).collect();
    let s1 = pairwise_sum(&d);
    let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
    let s2 = pairwise_sum(&sq);
    let mean = shift + s1 / n;
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

fn path_costs(
    engine: &Engine,
    x0: &[f64],
    t0: f64,
    n_paths: usize,
    base_seed: u64,
) -> Result<Vec<PathCosts>, SimError> {
    let theta = engine_theta(engine);
    let horizon = engine.path().horizon();
    (0..n_paths)
        .into_par_iter()
        .map_init(
            || Workspace::new(engine.n()),
            |ws, k| {
                let schedule = draw_jumps(&theta, t0, horizon, base_seed.wrapping_add(k as u64));
                engine.costs(ws, x0, t0, &schedule)
            },
        )
        .collect()
}

fn engine_theta(engine: &Engine) -> Vec<f64> {
    engine.theta().to_vec()
}

fn summarise(engine: &Engine, costs: &[PathCosts], x0: &[f64], t0: f64) -> Result<McEstimate, SimError> {
    let c = engine.path().evaluate(t0)?;
    let analytic_value = quad_form(&c, &Vector::from_column_slice(x0));
    let col = |f: fn(&PathCosts) -> f64| costs.iter().map(f).collect::<Vec<f64>>();
    let running = col(PathCosts::running);
    let total = col(PathCosts::total);
    let n = costs.len() as f64;
    let (mean, std_error) = mean_se(&running);
    let (total_mean, total_std_error) = mean_se(&total);
    Ok(McEstimate {
        tag: perturbation_tag(engine.perturbation()),
        n_paths: costs.len(),
        mean,
        std_error,
        analytic_value,
        impact_mean: pairwise_sum(&col(|p| p.impact)) / n,
        risk_mean: pairwise_sum(&col(|p| p.risk)) / n,
        remainder_mean: pairwise_sum(&col(|p| p.cost_to_go)) / n,
        remainder_bound_mean: pairwise_sum(&col(|p| p.remainder_bound)) / n,
        total_mean,
        total_std_error,
    })
}

impl Engine<'_> {
    /// Monte Carlo estimate over schedules seeded `base_seed + k`.
    pub fn estimate(&self, x0: &[f64], t0: f64, n_paths: usize, base_seed: u64) -> Result<McEstimate, SimError> {
        if n_paths < 2 {
            return Err(SimError::TooFewPaths(2));
        }
        let costs = path_costs(self, x0, t0, n_paths, base_seed)?;
        summarise(self, &costs, x0, t0)
    }
}

/// Cost of the optimal (or perturbed) feedback from `(t0, x0)`.
pub fn monte_carlo_value(
    path: &ValuePath,
    params: &MarketParams,
    x0: &[f64],
    t0: f64,
    n_paths: usize,
    base_seed: u64,
    perturbation: Option<Perturbation>,
) -> Result<McEstimate, SimError> {
    Engine::new(path, params, perturbation, DEFAULT_STEP_DIVISOR)?.estimate(x0, t0, n_paths, base_seed)
}

/// Runs `optimal` and `perturbed` on identical schedules.
pub fn compare_strategies(
    optimal: &Engine,
    perturbed: &Engine,
    x0: &[f64],
    t0: f64,
    n_paths: usize,
    base_seed: u64,
) -> Result<PairedComparison, SimError> {
    if n_paths < 2 {
        return Err(SimError::TooFewPaths(2));
    }
    let a = path_costs(optimal, x0, t0, n_paths, base_seed)?;
    let b = path_costs(perturbed, x0, t0, n_paths, base_seed)?;
    let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| q.total() - p.total()).collect();
    let (mean_difference, difference_std_error) = mean_se(&diff);
    Ok(PairedComparison {
        optimal: summarise(optimal, &a, x0, t0)?,
        perturbed: summarise(perturbed, &b, x0, t0)?,
        mean_difference,
        difference_std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_error() {
        let v = vec![0.1 + 0.2; 1000];
        let (m, se) = mean_se(&v);
        assert_eq!(m, 0.1 + 0.2);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|k| (k as f64).sin()).collect();
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-12);
    }
}
