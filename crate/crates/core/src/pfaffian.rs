//! Pfaffians of complex antisymmetric matrices by Parlett-Reid skew
//! tridiagonalisation with partial pivoting.

use crate::dense::{antisymmetry_defect, max_abs};
use crate::error::{Error, Result};
use faer::MatRef;
use num_complex::Complex64 as C64;

/// Relative antisymmetry tolerance accepted on input.
pub const ANTISYMMETRY_TOL: f64 = 1e-10;

pub fn pfaffian(a: MatRef<'_, C64>) -> Result<C64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Validation(format!(
            "pfaffian needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let defect = antisymmetry_defect(a);
    if defect > ANTISYMMETRY_TOL * max_abs(a).max(1.0) {
        return Err(Error::Validation(format!(
            "matrix is not antisymmetric (|A + A^T| = {defect:.3e})"
        )));
    }
    Ok(log_pfaffian_unchecked(a).value())
}

/// Pfaffian in logarithmic form; the input must already be antisymmetric.
pub fn log_pfaffian_unchecked(a: MatRef<'_, C64>) -> LogScalar {
    let n = a.nrows();
    let mut buf = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            buf[i * n + j] = (a[(i, j)] - a[(j, i)]) * 0.5;
        }
    }
    pfaffian_in_place(&mut buf, n)
}

/// A complex number stored as `exp(ln_abs) * phase`, for products that would
/// overflow `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogScalar {
    pub ln_abs: f64,
    pub phase: C64,
}

impl LogScalar {
    pub const ONE: LogScalar = LogScalar {
        ln_abs: 0.0,
        phase: C64::new(1.0, 0.0),
    };
    pub const ZERO: LogScalar = LogScalar {
        ln_abs: f64::NEG_INFINITY,
        phase: C64::new(0.0, 0.0),
    };

    pub fn from_c64(z: C64) -> LogScalar {
        let r = z.norm();
        if r == 0.0 {
            LogScalar::ZERO
        } else {
            LogScalar {
                ln_abs: r.ln(),
                phase: z / r,
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    pub fn value(&self) -> C64 {
        if self.is_zero() {
            C64::new(0.0, 0.0)
        } else {
            self.phase * self.ln_abs.exp()
        }
    }

    pub fn conj(&self) -> LogScalar {
        LogScalar {
            ln_abs: self.ln_abs,
            phase: self.phase.conj(),
        }
    }
}

impl std::ops::Mul for LogScalar {
    type Output = LogScalar;
    fn mul(self, rhs: LogScalar) -> LogScalar {
        if self.is_zero() || rhs.is_zero() {
            return LogScalar::ZERO;
        }
        let p = self.phase * rhs.phase;
        LogScalar {
            ln_abs: self.ln_abs + rhs.ln_abs,
            phase: p / p.norm(),
        }
    }
}

/// Pfaffian of the row-major antisymmetric matrix in `a`, which is destroyed.
pub fn pfaffian_in_place(a: &mut [C64], n: usize) -> LogScalar {
    debug_assert_eq!(a.len(), n * n);
    if n % 2 == 1 {
        return LogScalar::ZERO;
    }
    let mut pf = LogScalar::ONE;
    let mut tau = vec![C64::new(0.0, 0.0); n];
    let mut u = vec![C64::new(0.0, 0.0); n];
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        let mut best = a[(k + 1) * n + k].norm();
        for i in k + 2..n {
            let v = a[i * n + k].norm();
            if v > best {
                best = v;
                kp = i;
            }
        }
        if kp != k + 1 {
            swap_rows_cols(a, n, k + 1, kp);
            pf.phase = -pf.phase;
        }
        let piv = a[k * n + k + 1];
        if piv == C64::new(0.0, 0.0) {
            return LogScalar::ZERO;
        }
        pf = pf * LogScalar::from_c64(piv);
        if k + 2 < n {
            for i in k + 2..n {
                tau[i] = a[k * n + i] / piv;
                u[i] = a[i * n + k + 1];
            }
            for i in k + 2..n {
                let (ti, ui) = (tau[i], u[i]);
                let row = &mut a[i * n..(i + 1) * n];
                for j in k + 2..n {
                    row[j] += ti * u[j] - ui * tau[j];
                }
            }
        }
        k += 2;
    }
    pf
}

fn swap_rows_cols(a: &mut [C64], n: usize, p: usize, q: usize) {
    for j in 0..n {
        a.swap(p * n + j, q * n + j);
    }
    for i in 0..n {
        a.swap(i * n + p, i * n + q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{from_real, identity, zeros};
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_antisym(n: usize, rng: &mut ChaCha8Rng) -> Mat<C64> {
        let mut a = zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        a
    }

    /// Expansion along the first row, independent of the elimination above.
    fn pf_expand(a: &Mat<C64>) -> C64 {
        let n = a.nrows();
        if n == 0 {
            return C64::new(1.0, 0.0);
        }
        if n % 2 == 1 {
            return C64::new(0.0, 0.0);
        }
        let mut total = C64::new(0.0, 0.0);
        for j in 1..n {
            let keep: Vec<usize> = (1..n).filter(|&k| k != j).collect();
            let minor = Mat::from_fn(keep.len(), keep.len(), |r, c| a[(keep[r], keep[c])]);
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            total += a[(0, j)] * sign * pf_expand(&minor);
        }
        total
    }

    #[test]
    fn two_by_two() {
        let a = from_real(2, 2, &[0.0, 3.5, -3.5, 0.0]);
        assert!((pfaffian(a.as_ref()).unwrap() - C64::new(3.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn block_diagonal_is_product() {
        let a = from_real(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, -2.0, 0.0,
            ],
        );
        assert!((pfaffian(a.as_ref()).unwrap() - C64::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn known_four_by_four() {
        // Pf = a01 a23 - a02 a13 + a03 a12
        let a = from_real(
            4,
            4,
            &[
                0.0, 1.0, 2.0, 3.0, -1.0, 0.0, 4.0, 5.0, -2.0, -4.0, 0.0, 6.0, -3.0, -5.0, -6.0,
                0.0,
            ],
        );
        let expect = 1.0 * 6.0 - 2.0 * 5.0 + 3.0 * 4.0;
        assert!((pfaffian(a.as_ref()).unwrap() - C64::new(expect, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn odd_dimension_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_antisym(5, &mut rng);
        assert_eq!(pfaffian(a.as_ref()).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn matches_expansion_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2, 4, 6, 8] {
            let a = random_antisym(n, &mut rng);
            let pf = pfaffian(a.as_ref()).unwrap();
            let reference = pf_expand(&a);
            assert!((pf - reference).norm() < 1e-11 * reference.norm().max(1.0));
        }
    }

    #[test]
    fn square_equals_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [10, 20, 40] {
            let a = random_antisym(n, &mut rng);
            let pf = pfaffian(a.as_ref()).unwrap();
            let det = a.as_ref().determinant();
            assert!((pf * pf - det).norm() < 1e-9 * det.norm());
        }
    }

    #[test]
    fn congruence_scales_by_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_antisym(6, &mut rng);
        let mut b = identity(6);
        for i in 0..6 {
            for j in 0..6 {
                b[(i, j)] += C64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            }
        }
        let bab = &(&b * &a) * b.transpose();
        let lhs = pfaffian(bab.as_ref()).unwrap();
        let rhs = b.as_ref().determinant() * pfaffian(a.as_ref()).unwrap();
        assert!((lhs - rhs).norm() < 1e-11 * rhs.norm().max(1.0));
    }

    #[test]
    fn log_form_survives_overflow() {
        let n = 800;
        let mut a = zeros(n, n);
        for k in (0..n).step_by(2) {
            a[(k, k + 1)] = C64::new(1e3, 0.0);
            a[(k + 1, k)] = C64::new(-1e3, 0.0);
        }
        let lp = log_pfaffian_unchecked(a.as_ref());
        assert!((lp.ln_abs - 400.0 * 1e3f64.ln()).abs() < 1e-9);
        assert!((lp.phase - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_antisymmetric() {
        let a = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(pfaffian(a.as_ref()), Err(Error::Validation(_))));
    }
}
