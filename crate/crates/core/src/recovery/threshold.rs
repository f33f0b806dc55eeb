use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{row_norms, CMatrix};

/// Shrink factor `max(1 − λ/‖r‖, 0)`; a zero row stays zero.
#[inline]
pub fn shrink_factor(norm: f64, lambda: f64) -> f64 {
    if norm > lambda && norm > 0.0 {
        1.0 - lambda / norm
    } else {
        0.0
    }
}

/// In-place row soft-thresholding; rows flagged in `keep` are left untouched.
pub(crate) fn threshold_rows_in_place(x: &mut CMatrix, lambda: f64, keep: Option<&[bool]>) {
    let norms = row_norms(x);
    let scale: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(j, &n)| match keep {
            Some(k) if k[j] => 1.0,
            _ => shrink_factor(n, lambda),
        })
        .collect();
    for mut col in x.column_iter_mut() {
        for (z, &s) in col.iter_mut().zip(&scale) {
            if s != 1.0 {
                *z = Complex64::new(z.re * s, z.im * s);
            }
        }
    }
}

/// Scales each row `r` by `max(1 − λ/‖r‖₂, 0)`.
pub fn row_soft_threshold(x: &CMatrix, lambda: f64) -> CMatrix {
    assert!(lambda >= 0.0, "threshold must be non-negative");
    let mut out = x.clone();
    threshold_rows_in_place(&mut out, lambda, None);
    out
}

/// Row soft-thresholding that passes rows with `mask[j] = true` through
/// unchanged (prior support from already-recovered columns).
pub fn prior_aided_threshold(x: &CMatrix, lambda: f64, mask: &[bool]) -> Result<CMatrix> {
    if mask.len() != x.nrows() {
        return Err(Error::dims("prior mask", x.nrows(), mask.len()));
    }
    assert!(lambda >= 0.0, "threshold must be non-negative");
    let mut out = x.clone();
    threshold_rows_in_place(&mut out, lambda, Some(mask));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, row_norm};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn halves_a_norm_two_row() {
        let x = CMatrix::from_row_slice(1, 2, &[c(2.0, 0.0), c(0.0, 0.0)]);
        let y = row_soft_threshold(&x, 1.0);
        assert_eq!(y[(0, 0)], c(1.0, 0.0));
        assert!((row_norm(&y, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_rows_vanish_and_zero_lambda_is_identity() {
        let x = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.4), c(0.0, 0.0), c(3.0, 0.0), c(0.0, 4.0)]);
        let y = row_soft_threshold(&x, 0.5);
        assert_eq!(row_norm(&y, 0), 0.0);
        assert!((row_norm(&y, 1) - 4.5).abs() < 1e-12);
        assert_eq!(row_soft_threshold(&x, 0.0), x);
        let z = CMatrix::zeros(3, 2);
        assert_eq!(row_soft_threshold(&z, 1.0), z);
    }

    #[test]
    fn mask_extremes() {
        let x = CMatrix::from_row_slice(2, 1, &[c(0.5, 0.0), c(2.0, 1.0)]);
        assert_eq!(prior_aided_threshold(&x, 0.7, &[false, false]).unwrap(), row_soft_threshold(&x, 0.7));
        assert_eq!(prior_aided_threshold(&x, 0.7, &[true, true]).unwrap(), x);
    }

    #[test]
    fn masked_row_survives_while_equal_unmasked_row_is_zeroed() {
        // Two rows of norm 0.5 against λ = 1: only the prior row survives.
        let x = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.0, 0.4), c(0.0, 0.3), c(0.4, 0.0)]);
        let y = prior_aided_threshold(&x, 1.0, &[true, false]).unwrap();
        assert_eq!(y.row(0), x.row(0));
        assert_eq!(frobenius(&y.rows(1, 1).into_owned()), 0.0);
    }

    #[test]
    fn mask_length_is_checked() {
        assert!(prior_aided_threshold(&CMatrix::zeros(3, 1), 1.0, &[true]).is_err());
    }
}
