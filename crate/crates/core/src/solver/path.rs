use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::linalg::{cholesky_ok, from_flat, quad_flat, Mat, Vector};

use super::{RungRecord, SolveStats, SolverError};

/// Terminal penalty: finite `l` or the liquidation constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Finite(f64),
    Infinite,
}

impl Penalty {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Penalty::Infinite)
    }
}

/// `C(t)` tabulated on an ascending time grid with entry-wise monotone cubic
/// (PCHIP) interpolation.
#[derive(Debug, Clone)]
pub struct ValuePath {
    n: usize,
    horizon: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    pub penalty: Penalty,
    pub delta_cut: f64,
    pub stats: SolveStats,
    pub ladder: Vec<RungRecord>,
}

impl ValuePath {
    /// Builds a path from knots listed in ascending `tau` (descending `t`).
    pub(crate) fn from_tau_order(
        n: usize,
        horizon: f64,
        mut ts: Vec<f64>,
        mut mats: Vec<Vec<f64>>,
        penalty: Penalty,
        delta_cut: f64,
        stats: SolveStats,
    ) -> Self {
        ts.reverse();
        mats.reverse();
        if let Some(first) = ts.first_mut() {
            // the far knot is tau = T exactly
            *first = first.max(0.0);
            if first.abs() < 1e-15 * horizon {
                *first = 0.0;
            }
        }
        let nn = n * n;
        let mut values = Vec::with_capacity(ts.len() * nn);
        for m in &mats {
            values.extend_from_slice(m);
        }
        let slopes = pchip_slopes(&ts, &values, nn);
        Self { n, horizon, grid: ts, values, slopes, penalty, delta_cut, stats, ladder: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub(crate) fn knot_flat(&self, j: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[j * nn..(j + 1) * nn]
    }

    pub fn matrix_at_knot(&self, j: usize) -> Mat {
        from_flat(self.n, self.knot_flat(j))
    }

    /// Alias of [`ValuePath::matrix_at_knot`].
    pub fn value_at_knot(&self, j: usize) -> Mat {
        self.matrix_at_knot(j)
    }

    fn penalty_value(&self) -> f64 {
        match self.penalty {
            Penalty::Finite(l) => l,
            Penalty::Infinite => f64::INFINITY,
        }
    }

    /// Interpolates `C(t)` into `out` (row-major), without the definiteness check.
    pub(crate) fn interpolate_into(&self, t: f64, out: &mut [f64]) -> Result<(), SolverError> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(SolverError::OutOfGridRange { t, start, end });
        }
        let nn = self.n * self.n;
        let m = self.grid.len();
        let j = self.grid.partition_point(|&g| g <= t).saturating_sub(1).min(m - 1);
        if self.grid[j] == t || j == m - 1 {
            out[..nn].copy_from_slice(self.knot_flat(j));
            return Ok(());
        }
        let (t0, t1) = (self.grid[j], self.grid[j + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let y0 = &self.values[j * nn..(j + 1) * nn];
        let y1 = &self.values[(j + 1) * nn..(j + 2) * nn];
        let d0 = &self.slopes[j * nn..(j + 1) * nn];
        let d1 = &self.slopes[(j + 1) * nn..(j + 2) * nn];
        for e in 0..nn {
            out[e] = h00 * y0[e] + h10 * h * d0[e] + h01 * y1[e] + h11 * h * d1[e];
        }
        let n = self.n;
        for a in 0..n {
            for b in (a + 1)..n {
                let v = 0.5 * (out[a * n + b] + out[b * n + a]);
                out[a * n + b] = v;
                out[b * n + a] = v;
            }
        }
        Ok(())
    }

    /// `C(t)`; see [`evaluate_c`].
    pub fn evaluate(&self, t: f64) -> Result<Mat, SolverError> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        self.interpolate_into(t, &mut out)?;
        let mut scratch = vec![0.0; n * n];
        if !cholesky_ok(n, &out, &mut scratch) {
            return Err(SolverError::PositivityLost { t, l: self.penalty_value() });
        }
        Ok(from_flat(n, &out))
    }

    /// `x^T C(t) x`.
    pub fn value(&self, t: f64, x: &Vector) -> Result<f64, SolverError> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        self.interpolate_into(t, &mut out)?;
        Ok(quad_flat(n, &out, x.as_slice()))
    }

    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = String::from("t");
        for i in 1..=n {
            for j in 1..=n {
                let _ = write!(s, ",c_{i}_{j}");
            }
        }
        s.push('\n');
        for (k, t) in self.grid.iter().enumerate() {
            let _ = write!(s, "{}", fmt_num(*t));
            for v in self.knot_flat(k) {
                let _ = write!(s, ",{}", fmt_num(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Locale-free scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `C(t)` by entry-wise monotone cubic interpolation, re-symmetrised and
/// checked for positive definiteness.
pub fn evaluate_c(path: &ValuePath, t: f64) -> Result<Mat, SolverError> {
    path.evaluate(t)
}

/// Fritsch-Carlson slopes with the harmonic-mean interior rule and
/// shape-preserving one-sided end slopes, per entry.
fn pchip_slopes(x: &[f64], y: &[f64], stride: usize) -> Vec<f64> {
    let m = x.len();
    let mut d = vec![0.0; y.len()];
    if m < 2 {
        return d;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    for e in 0..stride {
        let del: Vec<f64> = (0..m - 1).map(|k| (y[(k + 1) * stride + e] - y[k * stride + e]) / h[k]).collect();
        if m == 2 {
            d[e] = del[0];
            d[stride + e] = del[0];
            continue;
        }
        for k in 1..m - 1 {
            let (a, b) = (del[k - 1], del[k]);
            d[k * stride + e] = if a * b <= 0.0 {
                0.0
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                (w1 + w2) / (w1 / a + w2 / b)
            };
        }
        d[e] = end_slope(h[0], h[1], del[0], del[1]);
        d[(m - 1) * stride + e] = end_slope(h[m - 2], h[m - 3], del[m - 2], del[m - 3]);
    }
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_path(ts: &[f64], f: impl Fn(f64) -> f64) -> ValuePath {
        let mut ts_desc: Vec<f64> = ts.to_vec();
        ts_desc.reverse();
        let mats = ts_desc.iter().map(|&t| vec![f(t)]).collect();
        ValuePath::from_tau_order(1, 1.0, ts_desc, mats, Penalty::Infinite, 0.1, SolveStats::default())
    }

    #[test]
    fn knots_are_reproduced_exactly() {
        let ts: Vec<f64> = (0..=10).map(|k| 0.09 * k as f64).collect();
        let p = scalar_path(&ts, |t| 1.0 / (1.0 - t));
        for (j, &t) in ts.iter().enumerate() {
            assert_eq!(p.evaluate(t).unwrap()[(0, 0)], p.matrix_at_knot(j)[(0, 0)]);
        }
    }

    #[test]
    fn out_of_range_is_refused() {
        let p = scalar_path(&[0.0, 0.5, 0.9], |t| 1.0 + t);
        assert!(matches!(p.evaluate(0.95), Err(SolverError::OutOfGridRange { .. })));
        assert!(matches!(p.evaluate(-0.1), Err(SolverError::OutOfGridRange { .. })));
    }

    #[test]
    fn interpolation_is_monotone_and_accurate() {
        let ts: Vec<f64> = (0..=900).map(|k| k as f64 / 1000.0).collect();
        let p = scalar_path(&ts, |t| 1.0 / (1.0 - t));
        let mut prev = 0.0;
        for k in 0..=8990 {
            let t = k as f64 / 10000.0;
            let v = p.evaluate(t).unwrap()[(0, 0)];
            assert!(v >= prev);
            assert!((v - 1.0 / (1.0 - t)).abs() < 1e-6 * v);
            prev = v;
        }
    }

    #[test]
    fn no_overshoot_on_a_step() {
        let ts = [0.0, 0.1, 0.2, 0.3, 0.4];
        let p = scalar_path(&ts, |t| if t < 0.25 { 1.0 } else { 5.0 });
        for k in 0..=40 {
            let v = p.evaluate(k as f64 * 0.01).unwrap()[(0, 0)];
            assert!(v >= 1.0 - 1e-14 && v <= 5.0 + 1e-14, "{v}");
        }
    }

    #[test]
    fn csv_layout() {
        let p = scalar_path(&[0.0, 0.5], |t| 1.0 + t);
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,c_1_1"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,1.0000000000000000e0"));
    }
}
