use crate::linalg::{cholesky_ok, from_flat, mul_into, sym_extremes, to_flat, Mat};
use crate::market::{DerivedQuantities, MarketParams};

use super::bounds::bounds_finite;
use super::path::{Penalty, ValuePath};
use super::{BoundPair, GridSpec, SolverError};

/// Integration diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub rk_steps: usize,
    pub halvings: usize,
    /// Largest `max |C - C^T| / max |C|` seen before re-symmetrising.
    pub max_drift: f64,
}

/// Right-hand side `C Lambda^-1 C + C C~ C - alpha Sigma` (derivative in `t`).
pub fn matrix_rhs(params: &MarketParams, lambda_inv: &Mat, c: &Mat) -> Mat {
    let n = c.nrows();
    let mut out = c * lambda_inv * c - &params.sigma * params.alpha;
    for i in 0..n {
        let th = params.theta[i];
        if th == 0.0 {
            continue;
        }
        let col = c.column(i);
        out += (th / c[(i, i)]) * col * col.transpose();
    }
    out
}

/// Backward RK4 integrator working in `tau = T - t` on flat buffers.
pub(crate) struct Integrator {
    n: usize,
    lambda_inv: Vec<f64>,
    alpha_sigma: Vec<f64>,
    theta: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    tmp: Vec<f64>,
    trial: Vec<f64>,
    scratch: Vec<f64>,
    pub stats: SolveStats,
}

impl Integrator {
    pub(crate) fn new(params: &MarketParams, derived: &DerivedQuantities) -> Self {
        let n = params.n();
        let z = vec![0.0; n * n];
        Self {
            n,
            lambda_inv: to_flat(&derived.lambda_inv),
            alpha_sigma: to_flat(&(&params.sigma * params.alpha)),
            theta: params.theta.clone(),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z.clone(),
            tmp: z.clone(),
            trial: z.clone(),
            scratch: z,
            stats: SolveStats::default(),
        }
    }

    /// `out = dC/dtau = -(C Lambda^-1 C + C C~ C - alpha Sigma)`.
    fn rhs(&mut self, c: &[f64], which: usize) {
        let n = self.n;
        mul_into(n, c, &self.lambda_inv, &mut self.tmp);
        let out = &mut self.k[which];
        mul_into(n, &self.tmp, c, out);
        for i in 0..n {
            let th = self.theta[i];
            if th == 0.0 {
                continue;
            }
            let w = th / c[i * n + i];
            for r in 0..n {
                let cr = w * c[r * n + i];
                for s in 0..n {
                    out[r * n + s] += cr * c[s * n + i];
                }
            }
        }
        for (o, a) in out.iter_mut().zip(&self.alpha_sigma) {
            *o = a - *o;
        }
    }

    /// One RK4 step of size `h` from `c` into `self.trial`.
    fn rk4(&mut self, c: &[f64], h: f64) {
        self.rhs(c, 0);
        for j in 0..self.stage.len() {
            self.stage[j] = c[j] + 0.5 * h * self.k[0][j];
        }
        let stage = std::mem::take(&mut self.stage);
        self.rhs(&stage, 1);
        let mut stage = stage;
        for j in 0..stage.len() {
            stage[j] = c[j] + 0.5 * h * self.k[1][j];
        }
        self.rhs(&stage, 2);
        for j in 0..stage.len() {
            stage[j] = c[j] + h * self.k[2][j];
        }
        self.rhs(&stage, 3);
        self.stage = stage;
        for j in 0..c.len() {
            self.trial[j] = c[j]
                + h / 6.0 * (self.k[0][j] + 2.0 * self.k[1][j] + 2.0 * self.k[2][j] + self.k[3][j]);
        }
    }

    /// Symmetrises `self.trial` in place, returning the relative drift.
    fn symmetrize_trial(&mut self) -> f64 {
        let n = self.n;
        let scale = self.trial.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut drift = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.trial[i * n + j];
                let b = self.trial[j * n + i];
                drift = drift.max((a - b).abs());
                let m = 0.5 * (a + b);
                self.trial[i * n + j] = m;
                self.trial[j * n + i] = m;
            }
        }
        if scale > 0.0 {
            drift / scale
        } else {
            0.0
        }
    }

    /// Integrates from `C(T) = l I` through the ascending `taus`, returning
    /// the flat matrix at every knot.
    pub(crate) fn run(
        &mut self,
        l: f64,
        taus: &[f64],
        lambda_min: f64,
        horizon: f64,
        substeps: usize,
    ) -> Result<Vec<Vec<f64>>, SolverError> {
        let n = self.n;
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            c[i * n + i] = l;
        }
        let scale = lambda_min / l;
        let floor = 1e-14 * horizon;
        let mut out = Vec::with_capacity(taus.len());
        let mut tau = 0.0;
        for &target in taus {
            while tau < target {
                let mut h = ((tau + scale) / substeps as f64).min(target - tau);
                loop {
                    self.rk4(&c, h);
                    let drift = self.symmetrize_trial();
                    let finite = self.trial.iter().all(|v| v.is_finite());
                    if finite && cholesky_ok(n, &self.trial, &mut self.scratch) {
                        self.stats.max_drift = self.stats.max_drift.max(drift);
                        break;
                    }
                    h *= 0.5;
                    self.stats.halvings += 1;
                    if h < floor {
                        let t = horizon - tau;
                        return Err(if finite {
                            SolverError::PositivityLost { t, l }
                        } else {
                            SolverError::StepFloorReached { t, l, floor }
                        });
                    }
                }
                std::mem::swap(&mut c, &mut self.trial);
                self.stats.rk_steps += 1;
                // land exactly on the knot
                tau = if target - (tau + h) <= 1e-15 * horizon { target } else { tau + h };
            }
            out.push(c.clone());
        }
        Ok(out)
    }
}

/// Checks `p <= eig(W C W) <= q` with slack `1e-6 q` at every knot.
pub(crate) fn check_sandwich(
    derived: &DerivedQuantities,
    ts: &[f64],
    mats: &[Vec<f64>],
    mut bound: impl FnMut(f64) -> Result<BoundPair, SolverError>,
) -> Result<(), SolverError> {
    let n = derived.lambda_inv_sqrt.nrows();
    let w = &derived.lambda_inv_sqrt;
    for (&t, c) in ts.iter().zip(mats) {
        let b = bound(t)?;
        let (lo, hi) = sym_extremes(&(w * from_flat(n, c) * w));
        let eps = 1e-6 * b.q;
        if lo < b.p - eps {
            return Err(SolverError::SandwichViolated { t, eigenvalue: lo, p: b.p, q: b.q });
        }
        if hi > b.q + eps {
            return Err(SolverError::SandwichViolated { t, eigenvalue: hi, p: b.p, q: b.q });
        }
    }
    Ok(())
}

/// Solves the finite-penalty problem on `[0, T]`.
pub fn solve_finite_penalty(
    params: &MarketParams,
    derived: &DerivedQuantities,
    l: f64,
    grid: &GridSpec,
) -> Result<ValuePath, SolverError> {
    grid.validate()?;
    if !(l > derived.l0) || !(l > 0.0) || !l.is_finite() {
        return Err(SolverError::PenaltyTooSmall { l, l0: derived.l0 });
    }
    let horizon = params.horizon;
    let taus = grid.tau_knots(horizon, 0.0, derived.lambda_min / l);
    let mut integ = Integrator::new(params, derived);
    let mats = integ.run(l, &taus, derived.lambda_min, horizon, grid.substeps)?;
    let ts: Vec<f64> = taus.iter().map(|tau| horizon - tau).collect();
    check_sandwich(derived, &ts, &mats, |t| bounds_finite(params, derived, l, t))?;
    Ok(ValuePath::from_tau_order(
        params.n(),
        horizon,
        ts,
        mats,
        Penalty::Finite(l),
        0.0,
        integ.stats,
    ))
}
