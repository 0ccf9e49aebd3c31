//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All model math is written against [`Real`], which is implemented for
//! `f32` and `f64`. Sampling primitives live on the trait so generic code
//! never has to restate `rand_distr` bounds.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// floating point: f32 or f64
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Natural log of the gamma function for positive arguments.
    fn log_gamma(self) -> Self;

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma draw with the given shape and scale (mean = shape * scale).
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self;

    /// Uniform draw on [0, 1).
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts a literal. Panics only on values unrepresentable in `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Inverse-gamma draw parameterised by shape and scale.
    #[inline]
    fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
        Self::one() / Self::sample_gamma(rng, shape, Self::one() / scale)
    }
}

impl Real for f64 {
    #[inline]
    fn log_gamma(self) -> Self {
        libm::lgamma(self)
    }

    #[inline]
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
        Gamma::new(shape, scale)
            .expect("gamma parameters validated by caller")
            .sample(rng)
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Real for f32 {
    #[inline]
    fn log_gamma(self) -> Self {
        libm::lgammaf(self)
    }

    #[inline]
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    #[inline]
    fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: Self, scale: Self) -> Self {
        Gamma::new(shape, scale)
            .expect("gamma parameters validated by caller")
            .sample(rng)
    }

    #[inline]
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Uses a single uniform draw so traces stay reproducible for a fixed
/// stream. Returns `None` when every weight is `-inf` or NaN.
pub fn sample_log_weights<T: Real, R: Rng + ?Sized>(log_weights: &[T], rng: &mut R) -> Option<usize> {
    let max = log_weights.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return None;
    }
    let total: T = log_weights.iter().map(|&w| (w - max).exp()).sum();
    let mut u = T::sample_unit(rng) * total;
    let mut last_positive = None;
    for (i, &w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > T::zero() {
            last_positive = Some(i);
        }
        if u < p {
            return Some(i);
        }
        u -= p;
    }
    // rounding left u marginally above the final cumulative weight
    last_positive
}
