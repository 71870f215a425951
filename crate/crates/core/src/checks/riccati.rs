use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::linalg::{sym_extremes, symmetrize, Mat};
use crate::market::{DerivedQuantities, MarketParams};
use crate::solver::{bounds_finite, solve_finite_penalty, GridSpec, SolverError};

use super::{CheckError, CheckReport};

/// Two matrix Riccati problems with constant coefficients, posed at `t0 =
/// horizon` and solved backward to `t = 0`:
/// `P' = -A^T P - P A - P B_P P + C_P`, `P(horizon) = S_P`, and likewise `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSpec {
    pub a: Mat,
    pub b_p: Mat,
    pub c_p: Mat,
    pub s_p: Mat,
    pub b_q: Mat,
    pub c_q: Mat,
    pub s_q: Mat,
    pub horizon: f64,
}

/// Premises are accepted down to this relative eigenvalue slack.
const PREMISE_TOL: f64 = 1e-12;
/// Relative tolerance on the PSD gap `P - Q`.
const GAP_TOL: f64 = 1e-8;

fn scale(ms: &[&Mat]) -> f64 {
    ms.iter().map(|m| m.abs().max()).fold(1.0, f64::max)
}

fn require_psd(name: &str, m: &Mat, scale: f64) -> Result<(), CheckError> {
    let (lo, _) = sym_extremes(m);
    if lo < -PREMISE_TOL * scale {
        return Err(CheckError::HypothesisViolated(format!("{name} has eigenvalue {lo:e}")));
    }
    Ok(())
}

impl RiccatiSpec {
    /// Checks `S_Q <= S_P`, `0 <= B_Q <= B_P`, `C_P <= C_Q` and symmetry.
    pub fn validate(&self) -> Result<(), CheckError> {
        let n = self.a.nrows();
        let all = [&self.a, &self.b_p, &self.c_p, &self.s_p, &self.b_q, &self.c_q, &self.s_q];
        if all.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(CheckError::HypothesisViolated("coefficient dimensions differ".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(CheckError::HypothesisViolated(format!("horizon {}", self.horizon)));
        }
        let s = scale(&all);
        for (name, m) in [("B_P", &self.b_p), ("C_P", &self.c_p), ("S_P", &self.s_p), ("B_Q", &self.b_q), ("C_Q", &self.c_q), ("S_Q", &self.s_q)] {
            if (m - m.transpose()).abs().max() > PREMISE_TOL * s {
                return Err(CheckError::HypothesisViolated(format!("{name} is not symmetric")));
            }
        }
        require_psd("S_P - S_Q", &(&self.s_p - &self.s_q), s)?;
        require_psd("B_Q", &self.b_q, s)?;
        require_psd("B_P - B_Q", &(&self.b_p - &self.b_q), s)?;
        require_psd("C_Q - C_P", &(&self.c_q - &self.c_p), s)
    }
}

/// Backward RK4 for `X' = -A^T X - X A - X B X + C`, `X(T) = S`, written in
/// `tau = T - t`. Returns `X` at each of the ascending `taus`, or `None` if
/// the solution leaves the finite range. Substeps are at most
/// `min(h_max, (tau + scale) / 48)`.
fn integrate(a: &Mat, b: &Mat, c: &Mat, s: &Mat, taus: &[f64], h_max: f64, scale: f64) -> Option<Vec<Mat>> {
    let at = a.transpose();
    let f = |x: &Mat| -> Mat { &at * x + x * a + x * b * x - c };
    let mut x = s.clone();
    let mut tau = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &target in taus {
        while tau < target {
            let h = h_max.min((tau + scale) / 48.0).min(target - tau);
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (0.5 * h)));
            let k3 = f(&(&x + &k2 * (0.5 * h)));
            let k4 = f(&(&x + &k3 * h));
            x = symmetrize(&(&x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
            if !x.iter().all(|v| v.is_finite()) || x.abs().max() > 1e12 {
                return None;
            }
            tau = if target - (tau + h) <= 1e-15 * target.max(1.0) { target } else { tau + h };
        }
        out.push(x.clone());
    }
    Some(out)
}

/// Integrates both problems on `steps` uniform steps and checks `P >= Q`
/// (smallest eigenvalue of `P - Q` at least `-1e-8 (1 + |P| + |Q|)`).
pub fn check_riccati_comparison(spec: &RiccatiSpec, steps: usize) -> Result<CheckReport, CheckError> {
    spec.validate()?;
    let h = spec.horizon / steps.max(1) as f64;
    let taus: Vec<f64> = (1..=steps.max(1)).map(|k| (k as f64 * h).min(spec.horizon)).collect();
    let p = integrate(&spec.a, &spec.b_p, &spec.c_p, &spec.s_p, &taus, h, f64::INFINITY)
        .ok_or_else(|| CheckError::HypothesisViolated("P has no finite solution on the interval".into()))?;
    let q = integrate(&spec.a, &spec.b_q, &spec.c_q, &spec.s_q, &taus, h, f64::INFINITY)
        .ok_or_else(|| CheckError::HypothesisViolated("Q has no finite solution although P does".into()))?;
    let mut report = CheckReport::new("riccati_comparison", GAP_TOL);
    let (lo, _) = sym_extremes(&(&spec.s_p - &spec.s_q));
    report.record(lo / (1.0 + spec.s_p.abs().max() + spec.s_q.abs().max()), || "terminal values".into());
    for ((tau, pm), qm) in taus.iter().zip(&p).zip(&q) {
        let (lo, _) = sym_extremes(&(pm - qm));
        let norm = 1.0 + pm.abs().max() + qm.abs().max();
        report.record(lo / norm, || format!("t = {:.6}: smallest eigenvalue of P - Q is {lo:e}", spec.horizon - tau));
    }
    Ok(report)
}

fn random_sym(n: usize, size: f64, rng: &mut impl Rng) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&g) * (size / n as f64)
}

fn random_psd(n: usize, size: f64, rng: &mut impl Rng) -> Mat {
    // random rank so that singular coefficients are exercised too
    let k = rng.random_range(1..=n);
    let g = Mat::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&(&g * g.transpose())) * (size / n as f64)
}

/// A spec satisfying the ordering premises, redrawn until `P` stays finite on
/// `[0, 1]`.
pub fn random_riccati_spec(n: usize, rng: &mut impl Rng) -> RiccatiSpec {
    loop {
        let a = Mat::from_fn(n, n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let b_q = random_psd(n, 0.5, rng);
        let b_p = &b_q + random_psd(n, 0.5, rng);
        let c_p = random_sym(n, 1.0, rng);
        let c_q = &c_p + random_psd(n, 1.0, rng);
        let s_p = random_sym(n, 0.5, rng);
        let s_q = &s_p - random_psd(n, 0.5, rng);
        let spec = RiccatiSpec { a, b_p, c_p, s_p, b_q, c_q, s_q, horizon: 1.0 };
        let taus = [1.0];
        if integrate(&spec.a, &spec.b_p, &spec.c_p, &spec.s_p, &taus, 1e-3, f64::INFINITY).is_some() {
            return spec;
        }
    }
}

/// `count` random specs with `n` cycling through `1..=4`.
pub fn riccati_battery(count: usize, steps: usize, seed: u64) -> CheckReport {
    let parts: Vec<CheckReport> = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let spec = random_riccati_spec(1 + k % 4, &mut rng);
            check_riccati_comparison(&spec, steps).unwrap_or_else(|e| {
                let mut r = CheckReport::new("riccati_comparison", GAP_TOL);
                r.fail(format!("spec {k}: {e}"));
                r
            })
        })
        .collect();
    let mut report = CheckReport::new("riccati_comparison_battery", GAP_TOL);
    for p in &parts {
        report.absorb(p);
    }
    report.note(format!("{count} random ordered specs, {steps} RK4 steps each, seed {seed}"));
    report
}

/// Integrates the scalar comparison problems `pL` and `qL` numerically and
/// checks `0 < p Lambda <= C(l, t) <= q Lambda` at every knot of the
/// finite-penalty solution, along with agreement of the integrated bounds
/// with their closed forms.
pub fn check_value_bounds_construction(
    params: &MarketParams,
    derived: &DerivedQuantities,
    l: f64,
    grid: &GridSpec,
) -> Result<CheckReport, SolverError> {
    let n = params.n();
    let path = solve_finite_penalty(params, derived, l, grid)?;
    let horizon = params.horizon;
    let lambda = &params.lambda;
    let times: Vec<f64> = path.grid().to_vec();
    let mut taus: Vec<f64> = times.iter().rev().map(|t| horizon - t).collect();
    taus[0] = 0.0;
    let h_max = horizon / grid.steps as f64;
    let step_scale = derived.lambda_min / l;

    // -P^ and -Q^ as Riccati problems in the comparison form
    let theta = derived.theta_sum;
    let a_p = Mat::identity(n, n) * (-0.5 * theta);
    let c_lower = lambda * (params.alpha * derived.d_min);
    let s_lower = lambda * (-l / derived.lambda_max);
    let c_upper = lambda * (params.alpha * derived.d_max);
    let s_upper = lambda * (-l / derived.lambda_min);
    let zero = Mat::zeros(n, n);
    let lower = integrate(&a_p, &derived.lambda_inv, &c_lower, &s_lower, &taus, h_max, step_scale);
    let upper = integrate(&zero, &derived.lambda_inv, &c_upper, &s_upper, &taus, h_max, step_scale);
    let mut report = CheckReport::new("value_bounds_construction", 1e-6);
    let (Some(lower), Some(upper)) = (lower, upper) else {
        report.fail("comparison solution left the finite range");
        return Ok(report);
    };
    for (k, tau) in taus.iter().enumerate() {
        let t = horizon - tau;
        let c = path.matrix_at_knot(times.len() - 1 - k);
        let p_hat = -&lower[k];
        let q_hat = -&upper[k];
        let b = bounds_finite(params, derived, l, t)?;
        let unit = b.q * derived.lambda_max;
        // the integrated comparison solutions are p Lambda and q Lambda
        let dp = (&p_hat - lambda * b.p).abs().max() / unit;
        let dq = (&q_hat - lambda * b.q).abs().max() / unit;
        report.record(-dp.max(dq), || format!("t = {t:.6}: integrated bound differs from closed form by {:e}", dp.max(dq)));
        let (pos, _) = sym_extremes(&p_hat);
        report.record(pos / unit, || format!("t = {t:.6}: lower bound not positive ({pos:e})"));
        let (lo, _) = sym_extremes(&(&c - &p_hat));
        report.record(lo / unit, || format!("t = {t:.6}: C - P^ has eigenvalue {lo:e}"));
        let (hi, _) = sym_extremes(&(&q_hat - &c));
        report.record(hi / unit, || format!("t = {t:.6}: Q^ - C has eigenvalue {hi:e}"));
    }
    report.note(format!("n = {n}, l = {l}, {} knots", taus.len()));
    Ok(report)
}

/// `y' = y^2 + a y - b`, `y(T) = c` solved backward on `[0, T]` and compared
/// with `1 / (T - t + 1 / (c + a/2)) - a/2`.
pub fn check_scalar_riccati_bound(a: f64, b: f64, c: f64, horizon: f64, steps: usize) -> Result<CheckReport, CheckError> {
    // a = b = 0 is admitted: the bound is then the exact solution
    if !(a >= 0.0 && b >= 0.0 && c > 0.0 && b < c * c + a * c && horizon > 0.0) {
        return Err(CheckError::HypothesisViolated(format!("a = {a}, b = {b}, c = {c}, T = {horizon}")));
    }
    let f = |y: f64| -(y * y + a * y - b);
    let bound = |tau: f64| 1.0 / (tau + 1.0 / (c + 0.5 * a)) - 0.5 * a;
    let h = horizon / steps.max(1) as f64;
    let mut report = CheckReport::new("scalar_riccati_bound", 1e-9);
    let mut y = c;
    report.record((y - bound(0.0)) / y.abs().max(1.0), || "terminal value".into());
    for k in 1..=steps.max(1) {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let tau = k as f64 * h;
        let lb = bound(tau);
        report.record((y - lb) / y.abs().max(1.0), || {
            format!("a = {a}, b = {b}, c = {c}: y({:.6}) = {y} below {lb}", horizon - tau)
        });
    }
    Ok(report)
}

/// `count` draws of `(a, b, c, T)` satisfying the comparison premises.
pub fn scalar_riccati_bound_battery(count: usize, steps: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("scalar_riccati_bound_battery", 1e-9);
    let mut drawn = 0;
    while drawn < count {
        let a = rng.random_range(0.0..5.0);
        let b = rng.random_range(0.0..10.0);
        let c = rng.random_range(0.01..10.0);
        let horizon = rng.random_range(0.1..4.0);
        if !(b < c * c + a * c) || a * a / 4.0 + b <= 0.0 {
            continue;
        }
        drawn += 1;
        match check_scalar_riccati_bound(a, b, c, horizon, steps) {
            Ok(r) => report.absorb(&r),
            Err(e) => report.fail(e.to_string()),
        }
    }
    report.note(format!("{count} draws, {steps} RK4 steps each, seed {seed}"));
    report
}
