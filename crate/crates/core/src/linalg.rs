//! Small dense linear-algebra helpers shared by the solver, the simulator and
//! the property checks.
//!
//! Portfolio dimensions are small, so everything here favours clarity. The
//! hot integration loops use the flat row-major kernels at the bottom of this
//! file instead of allocating `DMatrix` temporaries.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry.
pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max |A - A^T|` relative to `max |A|` (0 for the zero matrix).
pub fn relative_asymmetry(a: &Mat) -> f64 {
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// `(smallest, largest)` eigenvalue of a symmetric matrix.
pub fn sym_extremes(a: &Mat) -> (f64, f64) {
    let ev = sym_eigenvalues(a);
    (ev[0], ev[ev.len() - 1])
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(a));
    let q = &eig.eigenvectors;
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(q * d * q.transpose()))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn sym_sqrt(a: &Mat) -> Mat {
    sym_apply(a, |v| v.max(0.0).sqrt())
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &Mat) -> Option<Mat> {
    nalgebra::Cholesky::new(symmetrize(a)).map(|c| symmetrize(&c.inverse()))
}

/// `W A W` for a symmetric `W` (congruence).
pub fn congruence(w: &Mat, a: &Mat) -> Mat {
    symmetrize(&(w * a * w))
}

/// Positive definiteness by attempted Cholesky factorisation.
pub fn is_positive_definite(a: &Mat) -> bool {
    nalgebra::Cholesky::new(a.clone()).is_some()
}

pub fn quad_form(a: &Mat, x: &Vector) -> f64 {
    x.dot(&(a * x))
}

// ---------------------------------------------------------------------------
// flat row-major kernels

/// `out = a * b` for n x n row-major matrices.
pub(crate) fn mul_into(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

/// `out = a * x`.
pub(crate) fn mat_vec_into(n: usize, a: &[f64], x: &[f64], out: &mut [f64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        out[i] = row.iter().zip(x).map(|(r, v)| r * v).sum();
    }
}

/// `x^T a x`.
pub(crate) fn quad_flat(n: usize, a: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        let ri: f64 = row.iter().zip(x).map(|(r, v)| r * v).sum();
        s += x[i] * ri;
    }
    s
}

/// In-place Cholesky test on a scratch copy. Returns false if a pivot is not
/// strictly positive or non-finite.
pub(crate) fn cholesky_ok(n: usize, a: &[f64], scratch: &mut [f64]) -> bool {
    scratch[..n * n].copy_from_slice(&a[..n * n]);
    for j in 0..n {
        let mut d = scratch[j * n + j];
        for k in 0..j {
            d -= scratch[j * n + k] * scratch[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        scratch[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = scratch[i * n + j];
            for k in 0..j {
                s -= scratch[i * n + k] * scratch[j * n + k];
            }
            scratch[i * n + j] = s / d;
        }
    }
    true
}

pub(crate) fn to_flat(a: &Mat) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[(i, j)];
        }
    }
    out
}

pub(crate) fn from_flat(n: usize, a: &[f64]) -> Mat {
    Mat::from_row_slice(n, n, &a[..n * n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let a = Mat::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_sqrt(&a);
        assert!((&r * &r - &a).abs().max() < 1e-12);
    }

    #[test]
    fn flat_cholesky_agrees_with_nalgebra() {
        let good = [2.0, 1.0, 1.0, 2.0];
        let bad = [1.0, 2.0, 2.0, 1.0];
        let mut s = [0.0; 4];
        assert!(cholesky_ok(2, &good, &mut s));
        assert!(!cholesky_ok(2, &bad, &mut s));
        assert!(is_positive_definite(&from_flat(2, &good)));
        assert!(!is_positive_definite(&from_flat(2, &bad)));
    }

    #[test]
    fn asymmetry_is_relative() {
        let a = Mat::from_row_slice(2, 2, &[100.0, 1.0, 0.0, 100.0]);
        assert!((relative_asymmetry(&a) - 0.01).abs() < 1e-15);
        assert_eq!(relative_asymmetry(&Mat::zeros(3, 3)), 0.0);
    }
}
