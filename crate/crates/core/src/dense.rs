//! Small dense helpers on top of faer.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn max_abs(m: MatRef<'_, C64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    best
}

/// Largest entry of `A + A^T`.
pub fn antisymmetry_defect(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in i..n {
            best = best.max((a[(i, j)] + a[(j, i)]).norm());
        }
    }
    best
}

/// Replaces `A` by `(A - A^T) / 2`.
pub fn antisymmetrize(a: &mut CMat) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)] = ZERO;
        for j in i + 1..n {
            let v = (a[(i, j)] - a[(j, i)]) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
}

pub fn conj(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn transpose(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn submatrix(a: MatRef<'_, C64>, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn unitarity_defect(u: MatRef<'_, C64>) -> f64 {
    let n = u.nrows();
    let prod = adjoint(u) * u;
    max_abs_diff(prod.as_ref(), identity(n).as_ref())
}

/// Solves `A X = B` by partially pivoted LU and returns the solution together
/// with the relative residual `|A X - B| / (|A| |X| + |B|)`.
pub fn solve(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> (CMat, f64) {
    let lu = a.partial_piv_lu();
    let x = lu.solve(b);
    let res = &(a * &x) - b;
    let scale = max_abs(a) * max_abs(x.as_ref()) + max_abs(b);
    let rel = if scale > 0.0 {
        max_abs(res.as_ref()) / scale
    } else {
        0.0
    };
    let rel = if x.as_ref().is_all_finite() { rel } else { f64::INFINITY };
    (x, rel)
}

pub fn inverse(a: MatRef<'_, C64>) -> (CMat, f64) {
    let n = a.nrows();
    let inv = a.partial_piv_lu().inverse();
    if !inv.as_ref().is_all_finite() {
        return (inv, f64::INFINITY);
    }
    let res = max_abs_diff((a * &inv).as_ref(), identity(n).as_ref());
    (inv, res)
}

/// `ln |det A|` via LU.
pub fn log_abs_det(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let lu = a.partial_piv_lu();
    let u = lu.U();
    (0..n).map(|i| u[(i, i)].norm().ln()).sum()
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: MatRef<'_, C64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.singular_values().expect("svd did not converge")
}

/// Orthonormal basis (as columns) of the null space of `a`, keeping singular
/// values below `tol * max(1, s_max)`.
pub fn null_space(a: MatRef<'_, C64>, tol: f64) -> CMat {
    let n = a.ncols();
    if a.nrows() == 0 {
        return identity(n);
    }
    let svd = a.svd().expect("svd did not converge");
    let s = svd.S().column_vector();
    let v = svd.V();
    let smax = if s.nrows() > 0 { s[0].re.max(1.0) } else { 1.0 };
    let mut keep = Vec::new();
    for j in 0..n {
        let sj = if j < s.nrows() { s[j].re } else { 0.0 };
        if sj <= tol * smax {
            keep.push(j);
        }
    }
    Mat::from_fn(n, keep.len(), |i, k| v[(i, keep[k])])
}

/// Real `n x n` matrix stored as complex.
pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| C64::new(data[i * cols + j], 0.0))
}

pub fn from_rows(rows: &[&[C64]]) -> CMat {
    let r = rows.len();
    let c = if r > 0 { rows[0].len() } else { 0 };
    Mat::from_fn(r, c, |i, j| rows[i][j])
}

pub fn scale(a: MatRef<'_, C64>, s: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}
