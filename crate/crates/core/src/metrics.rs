//! Reconstruction error metrics.

use crate::error::{Error, Result};
use crate::grad::{discrete_gradient, tv_norm, Anchor, Image, TvMode};
use crate::multivec::{MultiVector, SupportSet};

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// `||est - truth||_2 / ||truth||_2` (absolute when the truth vanishes).
pub fn rel_l2(truth: &Image, est: &Image) -> Result<f64> {
    Ok(ratio(est.sub(truth)?.norm2(), truth.norm2()))
}

/// `TV(est - truth) / TV(truth)`.
pub fn rel_tv(truth: &Image, est: &Image, mode: TvMode) -> Result<f64> {
    Ok(ratio(tv_norm(&est.sub(truth)?, mode), tv_norm(truth, mode)))
}

/// `||grad est - grad truth||_{2,2} / ||grad truth||_{2,2}`.
pub fn gradient_rel_l22(truth: &Image, est: &Image) -> Result<f64> {
    let a = discrete_gradient(truth);
    let b = discrete_gradient(est);
    Ok(ratio(b.field().sub(a.field())?.frobenius(), a.field().frobenius()))
}

/// Relative Frobenius error between multi-vectors.
pub fn rel_frobenius(truth: &MultiVector, est: &MultiVector) -> Result<f64> {
    Ok(ratio(est.sub(truth)?.frobenius(), truth.frobenius()))
}

/// Shifts `est` by a constant so that it agrees with `truth` at the anchor.
pub fn match_gauge(truth: &Image, est: &Image, anchor: Anchor) -> Result<Image> {
    if truth.side() != est.side() {
        return Err(Error::DimensionMismatch { expected: truth.side(), found: est.side() });
    }
    let shift = truth.get(anchor.p1, anchor.p2) - est.get(anchor.p1, anchor.p2);
    let mut out = est.clone();
    for v in out.values_mut() {
        *v += shift;
    }
    Ok(out)
}

/// Jaccard index of two supports (1 when both are empty).
pub fn support_jaccard(a: &SupportSet, b: &SupportSet) -> f64 {
    a.jaccard(b)
}
