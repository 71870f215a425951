use rayon::prelude::*;

use crate::linalg::{quad_form, to_flat, Mat, Vector};
use crate::market::MarketParams;
use crate::sim::{draw_jumps, Engine};
use crate::solver::{principal_solution, GridSpec, LadderSpec, Penalty, SingleAsset, SolverError, ValuePath};
use crate::strategy::action_from_matrix;

use super::structure::{check_order_sizes, classify, Diversification};
use super::{CheckReport, STRICT_REL_GAP};

/// Symmetry identities hold to this relative tolerance.
const SYM_TOL: f64 = 1e-6;

/// Records `b > a` (strict) or `b >= a`, both to `STRICT_REL_GAP` relative.
fn ascending(r: &mut CheckReport, a: f64, b: f64, strict: bool, what: impl FnOnce() -> String) {
    let d = (b - a) / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    let margin = if strict { d - STRICT_REL_GAP } else { d + STRICT_REL_GAP };
    r.record(margin, || format!("{} ({a:.12e} -> {b:.12e})", what()));
}

fn descending(r: &mut CheckReport, a: f64, b: f64, strict: bool, what: impl FnOnce() -> String) {
    ascending(r, -a, -b, strict, what);
}

/// `|a - b| <= SYM_TOL * scale`.
fn close(r: &mut CheckReport, a: f64, b: f64, scale: f64, what: impl FnOnce() -> String) {
    let margin = SYM_TOL - (a - b).abs() / scale.max(f64::MIN_POSITIVE);
    r.record(margin, || format!("{} ({a:.12e} vs {b:.12e})", what()));
}

/// Grids for the single-asset comparative statics.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleAssetSweep {
    pub lambda: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub horizon: f64,
    pub x: f64,
    pub thetas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Values of the product `alpha sigma`.
    pub alpha_sigmas: Vec<f64>,
    pub times: Vec<f64>,
}

impl Default for SingleAssetSweep {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            sigma: 1.0,
            alpha: 6.0,
            theta: 4.0,
            horizon: 1.0,
            x: 1.0,
            thetas: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            lambdas: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            alpha_sigmas: vec![0.5, 1.0, 2.0, 4.0, 6.0, 8.0],
            times: vec![0.0, 0.25, 0.5, 0.75, 0.9, 0.99],
        }
    }
}

/// Monotonicity of the one-asset value, rate, no-fill trajectory, expected
/// position and cost split in `theta`, `Lambda` and `alpha sigma`, from the
/// closed forms.
pub fn check_single_asset_statics(sweep: &SingleAssetSweep) -> CheckReport {
    let mut r = CheckReport::new("single_asset_statics", 0.0);
    let x = sweep.x;
    let big_t = sweep.horizon;
    if !(x > 0.0) {
        r.fail(format!("needs a long position, got x = {x}"));
        return r;
    }
    let value = |a: &SingleAsset, t: f64| a.value(t, Penalty::Infinite).unwrap_or(f64::NAN);
    let interior: Vec<f64> = sweep.times.iter().copied().filter(|&t| t > 0.0 && t < big_t).collect();
    let base_risk = sweep.alpha * sweep.sigma;

    if base_risk > 0.0 {
        let assets: Vec<SingleAsset> = sweep
            .thetas
            .iter()
            .map(|&th| SingleAsset::new(sweep.lambda, sweep.sigma, sweep.alpha, th, big_t))
            .collect();
        for w in assets.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let tag = |what: &str, t: f64| format!("{what} in theta {} -> {} at t = {t}", a.theta, b.theta);
            for &t in &sweep.times {
                descending(&mut r, value(a, t), value(b, t), true, || tag("C", t));
                let (xa, xb) = (a.xi(t, x).unwrap_or(f64::NAN), b.xi(t, x).unwrap_or(f64::NAN));
                descending(&mut r, xa, xb, true, || tag("xi", t));
            }
            for &t in &interior {
                ascending(&mut r, a.trajectory_no_fill(t, x), b.trajectory_no_fill(t, x), true, || tag("no-fill path", t));
                descending(&mut r, a.expected_position(t, x), b.expected_position(t, x), true, || tag("E[X]", t));
            }
            descending(&mut r, a.risk_cost(x), b.risk_cost(x), true, || tag("risk cost", 0.0));
            descending(&mut r, a.impact_cost(x), b.impact_cost(x), true, || tag("impact cost", 0.0));
        }
    } else {
        r.note("theta sweep and lambda dependence of the rate skipped: they need alpha sigma > 0");
    }

    let assets: Vec<SingleAsset> = sweep
        .lambdas
        .iter()
        .map(|&l| SingleAsset::new(l, sweep.sigma, sweep.alpha, sweep.theta, big_t))
        .collect();
    for w in assets.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let tag = |what: &str, t: f64| format!("{what} in lambda {} -> {} at t = {t}", a.lambda, b.lambda);
        for &t in &sweep.times {
            ascending(&mut r, value(a, t), value(b, t), true, || tag("C", t));
        }
        // without risk the rate does not depend on lambda
        if base_risk == 0.0 {
            continue;
        }
        for &t in &sweep.times {
            descending(&mut r, a.xi(t, x).unwrap_or(f64::NAN), b.xi(t, x).unwrap_or(f64::NAN), true, || tag("xi", t));
        }
        for &t in &interior {
            ascending(&mut r, a.trajectory_no_fill(t, x), b.trajectory_no_fill(t, x), true, || tag("no-fill path", t));
        }
    }

    let assets: Vec<SingleAsset> = sweep
        .alpha_sigmas
        .iter()
        .map(|&k| SingleAsset::new(sweep.lambda, 1.0, k, sweep.theta, big_t))
        .collect();
    for w in assets.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let tag = |what: &str, t: f64| format!("{what} in alpha sigma {} -> {} at t = {t}", a.alpha, b.alpha);
        for &t in &sweep.times {
            ascending(&mut r, value(a, t), value(b, t), true, || tag("C", t));
            ascending(&mut r, a.xi(t, x).unwrap_or(f64::NAN), b.xi(t, x).unwrap_or(f64::NAN), true, || tag("xi", t));
        }
        for &t in &interior {
            descending(&mut r, a.trajectory_no_fill(t, x), b.trajectory_no_fill(t, x), true, || tag("no-fill path", t));
        }
    }
    r.note(format!("strict comparisons need relative gap {STRICT_REL_GAP:e}"));
    r
}

/// `-1`, 41 points on `[-0.99, 0.99]`, `1`; exactly antisymmetric.
pub fn default_rho_grid() -> Vec<f64> {
    let mut v = vec![-1.0];
    v.extend((0..=40).map(|k| 0.99 * (k as f64 - 20.0) / 20.0));
    v.push(1.0);
    v
}

/// Base market and grids for the two-asset comparative statics.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAssetSweep {
    pub lambda: [f64; 2],
    pub vol: [f64; 2],
    pub alpha: f64,
    pub theta: [f64; 2],
    pub horizon: f64,
    /// Correlation grid; must be symmetric about 0.
    pub rhos: Vec<f64>,
    pub times: Vec<f64>,
    pub portfolios: Vec<[f64; 2]>,
    /// Correlations at which the impact and intensity grids are swept.
    pub param_rhos: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub theta_grid: Vec<f64>,
    pub grid: GridSpec,
    pub ladder: LadderSpec,
}

impl Default for TwoAssetSweep {
    fn default() -> Self {
        Self {
            lambda: [3.0, 0.2],
            vol: [1.0, 1.0],
            alpha: 4.0,
            theta: [0.5, 5.0],
            horizon: 1.0,
            rhos: default_rho_grid(),
            times: vec![0.0, 0.25, 0.5, 0.75],
            portfolios: vec![[1.0, 1.0], [1.0, -1.0], [0.7, -1.1], [-0.3, 2.0]],
            param_rhos: vec![-0.6, 0.6],
            lambda_grid: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            theta_grid: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0],
            grid: GridSpec::default(),
            ladder: LadderSpec::default(),
        }
    }
}

impl TwoAssetSweep {
    fn params(&self, lambda: [f64; 2], rho: f64, theta: [f64; 2]) -> MarketParams {
        MarketParams::two_asset(lambda, 0.0, self.vol, rho, self.alpha, theta, self.horizon)
    }

    fn solve(&self, p: &MarketParams) -> Result<ValuePath, SolverError> {
        let d = p.derive()?;
        principal_solution(p, &d, &self.grid, &self.ladder)
    }

    /// `C(t)` for every time, one solve per market, in parallel.
    fn tables(&self, markets: &[MarketParams]) -> Result<Vec<Vec<Mat>>, String> {
        markets
            .par_iter()
            .map(|p| {
                let path = self.solve(p).map_err(|e| format!("solve failed for {p:?}: {e}"))?;
                self.times
                    .iter()
                    .map(|&t| path.evaluate(t).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect()
    }
}

fn v(c: &Mat, x: [f64; 2]) -> f64 {
    quad_form(c, &Vector::from_row_slice(&x))
}

/// Correlation structure of `C`, value and strategy for two assets with
/// diagonal impact, plus monotonicity in impact and intensity.
pub fn check_two_asset_statics(sweep: &TwoAssetSweep) -> CheckReport {
    let mut r = CheckReport::new("two_asset_statics", 0.0);
    let rhos = &sweep.rhos;
    let m = rhos.len();
    if (0..m).any(|k| rhos[k] != -rhos[m - 1 - k]) || rhos.windows(2).any(|w| w[0] >= w[1]) {
        r.fail("correlation grid must be increasing and symmetric about 0");
        return r;
    }
    if !(sweep.alpha > 0.0 && sweep.vol[0] > 0.0 && sweep.vol[1] > 0.0) {
        r.fail("needs alpha and both volatilities positive");
        return r;
    }
    let markets: Vec<MarketParams> = rhos.iter().map(|&rho| sweep.params(sweep.lambda, rho, sweep.theta)).collect();
    let tabs = match sweep.tables(&markets) {
        Ok(t) => t,
        Err(e) => {
            r.fail(e);
            return r;
        }
    };
    let times = &sweep.times;
    for (ti, &t) in times.iter().enumerate() {
        let c = |k: usize| &tabs[k][ti];
        let scale = |k: usize| c(k)[(0, 0)].max(c(k)[(1, 1)]);
        for k in 0..m {
            let (rho, ck) = (rhos[k], c(k));
            let mirror = c(m - 1 - k);
            let at = || format!("t = {t}, rho = {rho}");
            close(&mut r, ck[(0, 0)], mirror[(0, 0)], scale(k), || format!("c11 symmetry at {}", at()));
            close(&mut r, ck[(1, 1)], mirror[(1, 1)], scale(k), || format!("c22 symmetry at {}", at()));
            close(&mut r, ck[(0, 1)], -mirror[(0, 1)], scale(k), || format!("c12 antisymmetry at {}", at()));
            r.expect(ck[(0, 0)] > 0.0 && ck[(1, 1)] > 0.0, || format!("diagonal not positive at {}", at()));
            let s12 = ck[(0, 1)] / scale(k);
            if rho == 0.0 {
                close(&mut r, ck[(0, 1)], 0.0, scale(k), || format!("c12 at {}", at()));
            } else {
                r.record(s12 * rho.signum() - STRICT_REL_GAP, || format!("sign of c12 = {:.3e} at {}", ck[(0, 1)], at()));
            }

            // strategy at this correlation
            let p = &markets[k];
            for &x in &sweep.portfolios {
                let a = action_from_matrix(p, ck, t, &Vector::from_row_slice(&x));
                for i in 0..2 {
                    let (xi, eta) = (a.xi[i], a.eta[i]);
                    r.expect(xi == 0.0 && eta == 0.0 || xi * eta > 0.0, || {
                        format!("xi {xi:e} and eta {eta:e} differ in sign, asset {}, x = {x:?}, {}", i + 1, at())
                    });
                }
                // well diversified portfolios are cheaper than their mirror
                let flipped = [x[0], -x[1]];
                let (vx, vf) = (v(ck, x), v(ck, flipped));
                match classify(p, &x) {
                    Some(Diversification::Well) => ascending(&mut r, vx, vf, true, || format!("v{x:?} < v{flipped:?} at {}", at())),
                    Some(Diversification::Poor) => descending(&mut r, vx, vf, true, || format!("v{x:?} > v{flipped:?} at {}", at())),
                    _ => close(&mut r, vx, vf, vx, || format!("v{x:?} = v{flipped:?} at {}", at())),
                }
            }
        }

        let eta = |k: usize, x: [f64; 2]| action_from_matrix(&markets[k], c(k), t, &Vector::from_row_slice(&x)).eta;
        let xi = |k: usize, x: [f64; 2]| action_from_matrix(&markets[k], c(k), t, &Vector::from_row_slice(&x)).xi;
        for k in 0..m {
            let e = eta(k, [1.0, 1.0])[1] + eta(m - 1 - k, [1.0, 1.0])[1];
            close(&mut r, e, 2.0, 2.0, || format!("eta2(rho) + eta2(-rho) at t = {t}, rho = {}", rhos[k]));
        }
        for k in 0..m - 1 {
            let (r0, r1) = (rhos[k], rhos[k + 1]);
            let at = || format!("rho {r0} -> {r1}, t = {t}");
            let (a, b) = (c(k), c(k + 1));
            ascending(&mut r, a[(0, 1)], b[(0, 1)], false, || format!("c12 {}", at()));
            if r1 <= 0.0 {
                for i in 0..2 {
                    ascending(&mut r, a[(i, i)], b[(i, i)], true, || format!("c{0}{0} {1}", i + 1, at()));
                }
                ascending(&mut r, v(a, [1.0, 1.0]), v(b, [1.0, 1.0]), true, || format!("v(1, 1) {}", at()));
            }
            if r0 >= 0.0 {
                for i in 0..2 {
                    descending(&mut r, a[(i, i)], b[(i, i)], true, || format!("c{0}{0} {1}", i + 1, at()));
                }
                descending(&mut r, v(a, [1.0, -1.0]), v(b, [1.0, -1.0]), true, || format!("v(1, -1) {}", at()));
            }
            for x in [[1.0, 1.0], [0.7, 1.3]] {
                let neg = [-x[0], -x[1]];
                let (ea, eb) = (eta(k, x), eta(k + 1, x));
                let (na, nb) = (eta(k, neg), eta(k + 1, neg));
                for i in 0..2 {
                    ascending(&mut r, ea[i], eb[i], true, || format!("eta{} for x = {x:?}, {}", i + 1, at()));
                    descending(&mut r, na[i], nb[i], true, || format!("eta{} for x = {neg:?}, {}", i + 1, at()));
                }
                if r1 <= 0.0 {
                    let (xa, xb) = (xi(k, x), xi(k + 1, x));
                    for i in 0..2 {
                        ascending(&mut r, xa[i], xb[i], true, || format!("xi{} for x = {x:?}, {}", i + 1, at()));
                    }
                }
            }
        }

        // decoupled assets reproduce the one-asset closed forms
        if let Some(k0) = rhos.iter().position(|&x| x == 0.0) {
            for i in 0..2 {
                let one = SingleAsset::new(sweep.lambda[i], sweep.vol[i] * sweep.vol[i], sweep.alpha, sweep.theta[i], sweep.horizon);
                let exact = one.value(t, Penalty::Infinite).unwrap_or(f64::NAN);
                close(&mut r, c(k0)[(i, i)], exact, exact, || format!("uncorrelated c{0}{0} vs one-asset value at t = {t}", i + 1));
            }
        }
    }

    check_parameter_grids(sweep, &mut r);
    r.note(format!(
        "{} correlations, {} times; strict comparisons need relative gap {STRICT_REL_GAP:e}, identities hold to {SYM_TOL:e}",
        m,
        times.len()
    ));
    r
}

/// `v` increasing and `v / lambda_i` decreasing in `lambda_i`; `v`
/// decreasing in `theta_i`.
fn check_parameter_grids(sweep: &TwoAssetSweep, r: &mut CheckReport) {
    for &rho in &sweep.param_rhos {
        for i in 0..2 {
            let with_lambda = |l: f64| {
                let mut lam = sweep.lambda;
                lam[i] = l;
                sweep.params(lam, rho, sweep.theta)
            };
            let with_theta = |th: f64| {
                let mut theta = sweep.theta;
                theta[i] = th;
                sweep.params(sweep.lambda, rho, theta)
            };
            let lam_markets: Vec<MarketParams> = sweep.lambda_grid.iter().map(|&l| with_lambda(l)).collect();
            let th_markets: Vec<MarketParams> = sweep.theta_grid.iter().map(|&th| with_theta(th)).collect();
            let (lt, tt) = match (sweep.tables(&lam_markets), sweep.tables(&th_markets)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    r.fail(e);
                    continue;
                }
            };
            for (ti, &t) in sweep.times.iter().enumerate() {
                for &x in &sweep.portfolios {
                    for k in 0..lt.len() - 1 {
                        let (la, lb) = (sweep.lambda_grid[k], sweep.lambda_grid[k + 1]);
                        let (va, vb) = (v(&lt[k][ti], x), v(&lt[k + 1][ti], x));
                        let at = || format!("lambda{} {la} -> {lb}, rho = {rho}, t = {t}, x = {x:?}", i + 1);
                        ascending(r, va, vb, false, || format!("v in {}", at()));
                        descending(r, va / la, vb / lb, false, || format!("v / lambda in {}", at()));
                    }
                    for k in 0..tt.len() - 1 {
                        let (ta, tb) = (sweep.theta_grid[k], sweep.theta_grid[k + 1]);
                        let (va, vb) = (v(&tt[k][ti], x), v(&tt[k + 1][ti], x));
                        descending(r, va, vb, false, || {
                            format!("v in theta{} {ta} -> {tb}, rho = {rho}, t = {t}, x = {x:?}", i + 1)
                        });
                    }
                }
            }
        }
    }
}

/// Cross impact with `sgn(lambda_12) = sgn(rho)`: well diversified positions
/// are cheaper than their mirror, and along simulated optimal paths dark-pool
/// orders never overshoot zero for well diversified starts and always do
/// for poorly diversified ones.
pub fn check_cross_impact(
    cases: &[(f64, f64)],
    grid: &GridSpec,
    ladder: &LadderSpec,
    seeds: usize,
    base_seed: u64,
) -> CheckReport {
    let mut r = CheckReport::new("cross_impact", 0.0);
    let times = [0.0, 0.25, 0.5, 0.75];
    let portfolios = [[1.0, 1.0], [1.0, -1.0], [0.4, -1.3], [-2.0, 0.5]];
    for &(rho, l12) in cases {
        if rho == 0.0 || l12 == 0.0 || rho.signum() != l12.signum() {
            r.note(format!("skipped rho = {rho}, lambda_12 = {l12}: signs must agree and be nonzero"));
            continue;
        }
        let p = MarketParams::two_asset([1.0, 1.0], l12, [1.0, 1.0], rho, 1.0, [3.0, 3.0], 1.0);
        let path = match p.derive().map_err(SolverError::from).and_then(|d| principal_solution(&p, &d, grid, ladder)) {
            Ok(path) => path,
            Err(e) => {
                r.fail(format!("rho = {rho}, lambda_12 = {l12}: {e}"));
                continue;
            }
        };
        for &t in &times {
            let c = match path.evaluate(t) {
                Ok(c) => c,
                Err(e) => {
                    r.fail(e.to_string());
                    continue;
                }
            };
            for &x in &portfolios {
                let flipped = [x[0], -x[1]];
                let (vx, vf) = (v(&c, x), v(&c, flipped));
                let at = || format!("rho = {rho}, lambda_12 = {l12}, t = {t}");
                match classify(&p, &x) {
                    Some(Diversification::Well) => ascending(&mut r, vx, vf, true, || format!("v{x:?} < v{flipped:?}, {}", at())),
                    _ => descending(&mut r, vx, vf, true, || format!("v{x:?} > v{flipped:?}, {}", at())),
                }
            }
        }
        let engine = match Engine::new(&path, &p, None, 1) {
            Ok(e) => e,
            Err(e) => {
                r.fail(e.to_string());
                continue;
            }
        };
        let lambda_inv = to_flat(&p.derive().expect("validated above").lambda_inv);
        let well = if rho > 0.0 { [1.0, -1.0] } else { [1.0, 1.0] };
        let poor = if rho > 0.0 { [1.0, 1.0] } else { [1.0, -1.0] };
        for (x0, keep) in [(well, true), (poor, false)] {
            let parts: Vec<CheckReport> = (0..seeds)
                .into_par_iter()
                .map(|k| {
                    let mut part = CheckReport::new("cross_impact", 0.0);
                    let seed = base_seed.wrapping_add(k as u64);
                    let schedule = draw_jumps(&p.theta, 0.0, p.horizon, seed);
                    match engine.trajectory(&x0, 0.0, &schedule, Some(seed)) {
                        Ok(traj) => check_order_sizes(&mut part, &path, &p, &lambda_inv, &traj, keep),
                        Err(e) => part.fail(e.to_string()),
                    }
                    part
                })
                .collect();
            for part in &parts {
                r.absorb(part);
            }
        }
        r.note(format!("rho = {rho}, lambda_12 = {l12}: {seeds} paths per start"));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_grid_is_antisymmetric() {
        let g = default_rho_grid();
        assert_eq!(g.len(), 43);
        for k in 0..g.len() {
            assert_eq!(g[k], -g[g.len() - 1 - k]);
        }
        assert_eq!(g[21], 0.0);
    }

    #[test]
    fn single_asset_defaults_pass() {
        let r = check_single_asset_statics(&SingleAssetSweep::default());
        assert!(r.passed, "{:?}", r.witness);
        assert!(r.samples > 200);
    }

    #[test]
    fn theta_sweep_needs_risk() {
        let sweep = SingleAssetSweep { alpha: 0.0, ..Default::default() };
        let r = check_single_asset_statics(&sweep);
        assert!(r.passed);
        assert!(r.notes.iter().any(|n| n.contains("skipped")));
    }

    #[test]
    fn scalar_case_theta_endpoints() {
        let a0 = SingleAsset::new(1.0, 1.0, 6.0, 0.0, 1.0).value(0.0, Penalty::Infinite).unwrap();
        let a4 = SingleAsset::new(1.0, 1.0, 6.0, 4.0, 1.0).value(0.0, Penalty::Infinite).unwrap();
        assert!((a0 - 2.486_281_904_150_828_5).abs() < 1e-12);
        assert!((a4 - 1.173_630_104_219_688_6).abs() < 1e-12);
    }

    #[test]
    fn two_asset_coarse_pass() {
        let sweep = TwoAssetSweep {
            rhos: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            times: vec![0.0, 0.5],
            param_rhos: vec![0.6],
            lambda_grid: vec![0.2, 1.0, 3.0],
            theta_grid: vec![0.0, 1.0, 4.0],
            grid: GridSpec::with_steps(1024),
            ..Default::default()
        };
        let r = check_two_asset_statics(&sweep);
        assert!(r.passed, "{:?}", r.witness);
    }

    #[test]
    fn asymmetric_grid_is_rejected() {
        let sweep = TwoAssetSweep { rhos: vec![-0.5, 0.0, 0.4], ..Default::default() };
        assert!(!check_two_asset_statics(&sweep).passed);
    }

    #[test]
    fn cross_impact_small() {
        let r = check_cross_impact(&[(0.2, 0.3), (-0.5, -0.2), (0.2, -0.1)], &GridSpec::with_steps(1024), &LadderSpec::default(), 20, 1);
        assert!(r.passed, "{:?}", r.witness);
        assert!(r.notes.iter().any(|n| n.contains("skipped")));
    }
}
