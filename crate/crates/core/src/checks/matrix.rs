use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::linalg::{sym_extremes, Mat};

use super::{CheckError, CheckReport};

/// Relative PSD-gap tolerance: eigenvalues of the gap may dip to `-TOL |C|`.
const TOL: f64 = 1e-10;

fn spd_norm(c: &Mat) -> Result<f64, CheckError> {
    let (lo, hi) = sym_extremes(c);
    if !(lo > 0.0) {
        return Err(CheckError::InputNotSPD { min_eigenvalue: lo });
    }
    Ok(hi)
}

fn describe(c: &Mat, theta: &[f64]) -> String {
    let rows: Vec<String> = c
        .row_iter()
        .map(|r| r.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "))
        .collect();
    format!("C = [{}], theta = {theta:?}", rows.join("; "))
}

/// `C <= (sum theta) diag(c_ii / theta_i)` for SPD `C` and `theta > 0`.
pub fn check_matrix_inequality(c: &Mat, theta: &[f64]) -> Result<CheckReport, CheckError> {
    let norm = spd_norm(c)?;
    let n = c.nrows();
    if theta.len() != n || theta.iter().any(|&t| !(t > 0.0)) {
        return Err(CheckError::HypothesisViolated(format!("theta must be {n} positive entries, got {theta:?}")));
    }
    let total: f64 = theta.iter().sum();
    let bound = Mat::from_fn(n, n, |i, j| if i == j { total * c[(i, i)] / theta[i] } else { 0.0 });
    let mut report = CheckReport::new("matrix_inequality", TOL);
    let (gap, _) = sym_extremes(&(bound - c));
    report.record(gap / norm, || describe(c, theta));
    Ok(report)
}

/// `C C~ C <= theta C`, `C <= n diag(c_ii)` and `C <= tr(C) I`, with
/// `C~ = diag(theta_i / c_ii)`; zero intensities drop out of `C~`.
pub fn check_diagonal_bounds(c: &Mat, theta: &[f64]) -> Result<CheckReport, CheckError> {
    let norm = spd_norm(c)?;
    let n = c.nrows();
    if theta.len() != n || theta.iter().any(|&t| !(t >= 0.0)) {
        return Err(CheckError::HypothesisViolated(format!("theta must be {n} nonnegative entries, got {theta:?}")));
    }
    let total: f64 = theta.iter().sum();
    let c_tilde = Mat::from_fn(n, n, |i, j| if i == j && theta[i] > 0.0 { theta[i] / c[(i, i)] } else { 0.0 });
    let mut report = CheckReport::new("diagonal_bounds", TOL);

    let (g1, _) = sym_extremes(&(c * total - c * &c_tilde * c));
    report.record(g1 / (norm * total.max(1.0)), || format!("quadratic bound: {}", describe(c, theta)));

    let diag = Mat::from_fn(n, n, |i, j| if i == j { n as f64 * c[(i, i)] } else { 0.0 });
    let (g2, _) = sym_extremes(&(diag - c));
    report.record(g2 / norm, || format!("diagonal bound: {}", describe(c, theta)));

    let (g3, _) = sym_extremes(&(Mat::identity(n, n) * c.trace() - c));
    report.record(g3 / norm, || format!("trace bound: {}", describe(c, theta)));
    Ok(report)
}

/// `B^T B + eps I` with standard normal `B` and `eps = 1e-3 |B^T B|`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> Mat {
    let b = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = b.transpose() * &b;
    let (_, top) = sym_extremes(&a);
    let eps = 1e-3 * top.max(f64::MIN_POSITIVE);
    let mut out = a + Mat::identity(n, n) * eps;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Intensities in `(0.01, 10)`; with `allow_zero` each entry is 0 with
/// probability 1/4.
fn random_theta(n: usize, allow_zero: bool, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if allow_zero && rng.random_range(0..4) == 0 {
                0.0
            } else {
                0.01 + rng.random::<f64>() * 9.99
            }
        })
        .collect()
}

fn battery(
    name: &str,
    count: usize,
    max_n: usize,
    seed: u64,
    allow_zero: bool,
    check: fn(&Mat, &[f64]) -> Result<CheckReport, CheckError>,
) -> CheckReport {
    let parts: Vec<CheckReport> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = 1 + k % max_n.max(1);
            let c = random_spd(n, &mut rng);
            let theta = random_theta(n, allow_zero, &mut rng);
            check(&c, &theta).unwrap_or_else(|e| {
                let mut r = CheckReport::new(name, TOL);
                r.fail(format!("sample {k}: {e}"));
                r
            })
        })
        .collect();
    let mut report = CheckReport::new(name, TOL);
    for p in &parts {
        report.absorb(p);
    }
    report.note(format!("{count} random SPD matrices, n <= {max_n}, seed {seed}"));
    report
}

pub fn matrix_inequality_battery(count: usize, max_n: usize, seed: u64) -> CheckReport {
    battery("matrix_inequality_battery", count, max_n, seed, false, check_matrix_inequality)
}

pub fn diagonal_bounds_battery(count: usize, max_n: usize, seed: u64) -> CheckReport {
    battery("diagonal_bounds_battery", count, max_n, seed, true, check_diagonal_bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_example() {
        let c = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = check_matrix_inequality(&c, &[1.0, 1.0]).unwrap();
        assert!(r.passed);
        // gap [[2,-1],[-1,2]] has eigenvalues {1, 3}; |C| = 3
        assert!((r.margin - 1.0 / 3.0).abs() < 1e-14);
        let r = check_diagonal_bounds(&c, &[1.0, 1.0]).unwrap();
        assert!(r.passed && r.samples == 3);
    }

    #[test]
    fn scalar_is_equality() {
        let c = Mat::from_element(1, 1, 3.7);
        let r = check_matrix_inequality(&c, &[0.4]).unwrap();
        assert_eq!(r.margin, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn identity_diagonal_bounds() {
        let c = Mat::identity(3, 3);
        assert!(check_diagonal_bounds(&c, &[0.0, 2.0, 5.0]).unwrap().passed);
    }

    #[test]
    fn rejects_indefinite_input() {
        let c = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(check_matrix_inequality(&c, &[1.0, 1.0]), Err(CheckError::InputNotSPD { .. })));
        assert!(matches!(check_diagonal_bounds(&c, &[1.0, 1.0]), Err(CheckError::InputNotSPD { .. })));
        let c = Mat::identity(2, 2);
        assert!(matches!(check_matrix_inequality(&c, &[1.0, 0.0]), Err(CheckError::HypothesisViolated(_))));
    }

    #[test]
    fn nearly_singular_input_still_passes() {
        let c = Mat::from_row_slice(2, 2, &[1.0, 0.999, 0.999, 1.0]);
        let r = check_matrix_inequality(&c, &[1e-3, 5.0]).unwrap();
        assert!(r.passed);
        assert!(r.margin >= 0.0);
    }

    #[test]
    fn small_battery_passes_and_is_deterministic() {
        let a = matrix_inequality_battery(600, 6, 11);
        let b = matrix_inequality_battery(600, 6, 11);
        assert!(a.passed, "{:?}", a.witness);
        assert_eq!(a, b);
        assert_eq!(a.samples, 600);
        assert!(diagonal_bounds_battery(600, 6, 11).passed);
    }

    #[test]
    fn random_spd_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            let a = random_spd(n, &mut rng);
            assert_eq!(a, a.transpose());
            let (lo, hi) = sym_extremes(&a);
            assert!(lo >= 0.9e-3 * hi);
        }
    }
}
