//! Small dense symmetric positive-definite routines on row-major slices.
//!
//! The systems solved here are (q + M) x (q + M) with M the number of
//! clusters, so a hand-rolled in-place Cholesky beats pulling a general
//! linear algebra dependency into the sampling hot path.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// In-place lower Cholesky factorisation of a row-major `d x d` matrix.
/// Only the lower triangle is read; the upper triangle is zeroed.
/// Returns `false` when a non-positive pivot is met.
pub fn cholesky_in_place<T: Real>(a: &mut [T], d: usize) -> bool {
    debug_assert_eq!(a.len(), d * d);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
        for k in (j + 1)..d {
            a[j * d + k] = T::zero();
        }
    }
    true
}

/// Cholesky with the crate's jitter policy: on failure add
/// `1e-10 * mean(diag)` to the diagonal and retry once.
///
/// `scratch` must have length `d * d`; it receives a pristine copy so the
/// retry starts from the original matrix.
pub fn cholesky_jittered<T: Real>(a: &mut [T], d: usize, scratch: &mut Vec<T>) -> Result<()> {
    scratch.clear();
    scratch.extend_from_slice(a);
    if cholesky_in_place(a, d) {
        return Ok(());
    }
    let mean_diag = (0..d).map(|i| scratch[i * d + i]).sum::<T>() / T::of(d.max(1));
    let jitter = T::lit(1e-10) * mean_diag.abs();
    a.copy_from_slice(scratch);
    for i in 0..d {
        a[i * d + i] += jitter;
    }
    if cholesky_in_place(a, d) {
        log::debug!("cholesky succeeded after jitter {jitter}");
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite { dim: d })
    }
}

/// Solves `L x = b` in place for lower-triangular `L`.
pub fn forward_substitute<T: Real>(l: &[T], d: usize, b: &mut [T]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Solves `L^T x = b` in place for lower-triangular `L`.
pub fn backward_substitute_transpose<T: Real>(l: &[T], d: usize, b: &mut [T]) {
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// `log |A|` from the Cholesky factor of `A`.
pub fn log_det_from_cholesky<T: Real>(l: &[T], d: usize) -> T {
    (0..d).map(|i| l[i * d + i].ln()).sum::<T>() * T::lit(2.0)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}
