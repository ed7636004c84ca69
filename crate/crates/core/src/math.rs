//! Float helpers that work without `std`.

use num_traits::Float;

use crate::C64;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    Float::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    Float::cos(x)
}

#[inline]
pub(crate) fn asin(x: f64) -> f64 {
    Float::asin(x)
}

#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    Float::atan2(y, x)
}

#[inline]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    Float::powf(x, y)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    Float::round(x)
}

#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    let (s, c) = Float::sin_cos(phase);
    C64::new(c, s)
}

#[inline]
pub(crate) fn norm_sqr(z: C64) -> f64 {
    z.re * z.re + z.im * z.im
}

#[inline]
pub(crate) fn abs(z: C64) -> f64 {
    Float::hypot(z.re, z.im)
}

/// Euclidean norm of a complex slice.
pub(crate) fn norm2(v: &[C64]) -> f64 {
    sqrt(v.iter().map(|z| norm_sqr(*z)).sum())
}

/// `sum conj(a_i) b_i`.
pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
