//! Dense complex matrix helpers.
//!
//! Products go through `matrixmultiply::zgemm`; nalgebra's generic product is
//! far slower for `Complex64`. zgemm ignores conjugation flags, so callers that
//! need `Aᴴ·B` pass an explicitly conjugated copy of `A`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `c ← alpha·a·b + beta·c`, all column-major.
pub fn gemm_into(c: &mut CMatrix, alpha: Complex64, a: &CMatrix, b: &CMatrix, beta: Complex64) {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "inner dimensions must agree");
    assert_eq!(c.shape(), (m, n), "output shape must be a.rows × b.cols");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == ZERO {
            c.fill(ZERO);
        } else {
            *c *= beta;
        }
        return;
    }
    // SAFETY: Complex64 is #[repr(C)] {re, im}, layout-identical to [f64; 2].
    // All three buffers are column-major with the strides given, and `c` does
    // not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut c = CMatrix::zeros(a.nrows(), b.ncols());
    gemm_into(&mut c, ONE, a, b, ZERO);
    c
}

pub fn frobenius_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    frobenius_sq(a).sqrt()
}

pub fn row_norm(a: &CMatrix, row: usize) -> f64 {
    a.row(row).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn row_norms(a: &CMatrix) -> Vec<f64> {
    let mut acc = vec![0.0; a.nrows()];
    for col in a.column_iter() {
        for (s, z) in acc.iter_mut().zip(col.iter()) {
            *s += z.norm_sqr();
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// Complex-conjugated copy (no transpose).
pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Columns `start..start+len` as an owned matrix.
pub fn columns(a: &CMatrix, start: usize, len: usize) -> CMatrix {
    a.columns(start, len).into_owned()
}

/// Sub-matrix made of the given columns, in the given order.
pub fn select_columns(a: &CMatrix, cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Minimum-ℓ2-norm least-squares solution of `a·w = b` (pseudo-inverse
/// semantics). Singular values below `max(m, n)·σ_max·ε` are treated as zero.
pub fn lstsq_min_norm(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims("least squares", a.nrows(), b.nrows()));
    }
    if a.ncols() == 0 {
        return Ok(CMatrix::zeros(0, b.ncols()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (a.nrows().max(a.ncols()) as f64) * smax * f64::EPSILON;
    svd.solve(b, eps).map_err(|reason| Error::Format {
        what: "least-squares system",
        reason: reason.to_string(),
    })
}

/// Numerical rank with singular values above `rel_tol·σ_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &CMatrix, b: &CMatrix) -> CMatrix {
        CMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
            (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        CMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            Complex64::new(a, b)
        })
    }

    #[test]
    fn zgemm_matches_naive_product() {
        for &(m, k, n) in &[(1, 1, 1), (7, 5, 3), (35, 160, 9), (4, 0, 2)] {
            let a = sample(m, k, 1);
            let b = sample(k, n, 2);
            assert!(max_abs_diff(&matmul(&a, &b), &naive(&a, &b)) < 1e-12);
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = sample(3, 4, 3);
        let b = sample(4, 2, 4);
        let mut c = sample(3, 2, 5);
        let expected = naive(&a, &b) * Complex64::new(2.0, 0.0) + &c * Complex64::new(0.0, 1.0);
        gemm_into(&mut c, Complex64::new(2.0, 0.0), &a, &b, Complex64::new(0.0, 1.0));
        assert!(max_abs_diff(&c, &expected) < 1e-12);
    }

    #[test]
    fn lstsq_recovers_consistent_system() {
        let a = sample(6, 3, 9);
        let w = sample(3, 2, 10);
        let b = matmul(&a, &w);
        let sol = lstsq_min_norm(&a, &b).unwrap();
        assert!(max_abs_diff(&sol, &w) < 1e-10);
    }

    #[test]
    fn lstsq_rejects_row_mismatch() {
        assert!(lstsq_min_norm(&sample(3, 2, 1), &sample(4, 1, 2)).is_err());
    }
}
