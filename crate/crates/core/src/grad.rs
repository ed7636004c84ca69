//! Pixelated images and their discrete gradients.
//!
//! Pixels are indexed `p = (p1, p2)` with `p1` the first (row) axis and the
//! flat index `j = p1 * q + p2`. Forward differences use zero extension past
//! the last row and column:
//!
//! ```text
//! (D1 V)_p = V(p + e1) - V(p),   (D2 V)_p = V(p + e2) - V(p).
//! ```
//!
//! A [`GradientField`] stores `l^2 * (D1 V, D2 V)` as an `m x 2` multi-vector.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{abs, norm_sqr, sqrt};
use crate::multivec::{Exponent, MultiVector};
use crate::C64;

/// Isotropic (row 2-norm) or anisotropic (sum of moduli) total variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TvMode {
    #[default]
    Isotropic,
    Anisotropic,
}

/// A `q x q` complex image with grid spacing `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    side: usize,
    spacing: f64,
    values: Vec<C64>,
}

impl Image {
    pub fn zeros(side: usize, spacing: f64) -> Result<Self> {
        Self::from_values(side, spacing, vec![C64::new(0.0, 0.0); side * side])
    }

    pub fn from_values(side: usize, spacing: f64, values: Vec<C64>) -> Result<Self> {
        if side < 3 {
            return Err(invalid(alloc::format!("image side must be at least 3, got {side}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("grid spacing must be positive"));
        }
        if values.len() != side * side {
            return Err(Error::DimensionMismatch { expected: side * side, found: values.len() });
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("image values must be finite"));
        }
        Ok(Self { side, spacing, values })
    }

    pub fn from_real(side: usize, spacing: f64, values: &[f64]) -> Result<Self> {
        Self::from_values(side, spacing, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of pixels `m = q^2`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn get(&self, p1: usize, p2: usize) -> C64 {
        self.values[p1 * self.side + p2]
    }

    pub fn set(&mut self, p1: usize, p2: usize, v: C64) {
        self.values[p1 * self.side + p2] = v;
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("grid spacing must be positive"));
        }
        self.spacing = spacing;
        Ok(self)
    }

    /// True when every pixel on the outermost frame is exactly zero.
    pub fn has_zero_border(&self) -> bool {
        let q = self.side;
        (0..q).all(|k| {
            self.get(0, k) == C64::new(0.0, 0.0)
                && self.get(q - 1, k) == C64::new(0.0, 0.0)
                && self.get(k, 0) == C64::new(0.0, 0.0)
                && self.get(k, q - 1) == C64::new(0.0, 0.0)
        })
    }

    pub fn require_zero_border(&self) -> Result<()> {
        if self.has_zero_border() {
            Ok(())
        } else {
            Err(Error::Precondition("image must vanish on its one-pixel border".into()))
        }
    }

    /// Euclidean norm of the pixel values.
    pub fn norm2(&self) -> f64 {
        crate::math::norm2(&self.values)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        if self.side != other.side {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Image { side: self.side, spacing: self.spacing, values })
    }

    /// Mask of interior (non-border) pixels.
    pub fn interior_mask(side: usize) -> Vec<bool> {
        let mut mask = vec![false; side * side];
        for p1 in 1..side.saturating_sub(1) {
            for p2 in 1..side - 1 {
                mask[p1 * side + p2] = true;
            }
        }
        mask
    }
}

/// `l^2 * (D1 V, D2 V)` on a `q x q` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    side: usize,
    spacing: f64,
    field: MultiVector,
}

impl GradientField {
    /// Wraps an `m x 2` multi-vector.
    pub fn new(side: usize, spacing: f64, field: MultiVector) -> Result<Self> {
        if field.shape() != (side * side, 2) {
            return Err(invalid(alloc::format!(
                "gradient field must be {} x 2, got {:?}",
                side * side,
                field.shape()
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid("grid spacing must be positive"));
        }
        Ok(Self { side, spacing, field })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn field(&self) -> &MultiVector {
        &self.field
    }

    pub fn into_field(self) -> MultiVector {
        self.field
    }

    /// `(X1, X2)` at pixel `p`.
    pub fn at(&self, p1: usize, p2: usize) -> (C64, C64) {
        let j = p1 * self.side + p2;
        (self.field.get(j, 0), self.field.get(j, 1))
    }
}

/// Unscaled forward differences, written into two planes.
fn forward_differences(values: &[C64], q: usize, d1: &mut [C64], d2: &mut [C64]) {
    let zero = C64::new(0.0, 0.0);
    for p1 in 0..q {
        for p2 in 0..q {
            let j = p1 * q + p2;
            let v = values[j];
            let down = if p1 + 1 < q { values[j + q] } else { zero };
            let right = if p2 + 1 < q { values[j + 1] } else { zero };
            d1[j] = down - v;
            d2[j] = right - v;
        }
    }
}

/// Adjoint of [`forward_differences`]: `out = D1^T g1 + D2^T g2`.
pub(crate) fn forward_differences_adjoint(g1: &[C64], g2: &[C64], q: usize, out: &mut [C64]) {
    for p1 in 0..q {
        for p2 in 0..q {
            let j = p1 * q + p2;
            let mut acc = -g1[j] - g2[j];
            if p1 > 0 {
                acc += g1[j - q];
            }
            if p2 > 0 {
                acc += g2[j - 1];
            }
            out[j] = acc;
        }
    }
}

/// Unscaled `(D1 V, D2 V)` as two vectors of length `m`.
pub(crate) fn unscaled_gradient(values: &[C64], q: usize) -> (Vec<C64>, Vec<C64>) {
    let mut d1 = vec![C64::new(0.0, 0.0); q * q];
    let mut d2 = d1.clone();
    forward_differences(values, q, &mut d1, &mut d2);
    (d1, d2)
}

/// `l^2 * (D1 V, D2 V)`.
pub fn discrete_gradient(image: &Image) -> GradientField {
    let q = image.side;
    let (d1, d2) = unscaled_gradient(&image.values, q);
    let scale = image.spacing * image.spacing;
    let columns = [
        d1.iter().map(|z| z * scale).collect::<Vec<_>>(),
        d2.iter().map(|z| z * scale).collect::<Vec<_>>(),
    ];
    let field = MultiVector::from_columns(&columns).expect("gradient columns are consistent");
    GradientField { side: q, spacing: image.spacing, field }
}

/// Total variation from unscaled differences (no `l^2` factor).
pub fn tv_norm(image: &Image, mode: TvMode) -> f64 {
    let (d1, d2) = unscaled_gradient(&image.values, image.side);
    tv_of_differences(&d1, &d2, mode)
}

pub(crate) fn tv_of_differences(d1: &[C64], d2: &[C64], mode: TvMode) -> f64 {
    match mode {
        TvMode::Isotropic => d1.iter().zip(d2).map(|(a, b)| sqrt(norm_sqr(*a) + norm_sqr(*b))).sum(),
        TvMode::Anisotropic => d1.iter().zip(d2).map(|(a, b)| abs(*a) + abs(*b)).sum(),
    }
}

/// Pointwise curl `D1 X2 - D2 X1` with zero extension.
pub fn curl(field: &GradientField) -> Vec<C64> {
    let q = field.side;
    let x1 = field.field.column(0);
    let x2 = field.field.column(1);
    let (d1x2, _) = unscaled_gradient(&x2, q);
    let (_, d2x1) = unscaled_gradient(&x1, q);
    d1x2.iter().zip(&d2x1).map(|(a, b)| a - b).collect()
}

/// `max_p |D1 X2 - D2 X1|`.
pub fn curl_residual(field: &GradientField) -> f64 {
    curl(field).iter().map(|z| abs(*z)).fold(0.0, f64::max)
}

/// Pixel and value that fix the additive constant during integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub p1: usize,
    pub p2: usize,
    pub value: C64,
}

impl Default for Anchor {
    /// Top-left border pixel with value 0.
    fn default() -> Self {
        Self { p1: 0, p2: 0, value: C64::new(0.0, 0.0) }
    }
}

/// Order in which the integration recursion visits the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// Walk the anchor column with `D1`, then every row with `D2`.
    #[default]
    RowMajor,
    /// Walk the anchor row with `D2`, then every column with `D1`.
    ColumnMajor,
}

/// Relative tolerance on the curl residual accepted by integration.
pub const INTEGRATION_TOLERANCE: f64 = 1e-9;

/// Integrates `X / l^2` from the anchor with the default sweep.
pub fn integrate_gradient(field: &GradientField, anchor: Anchor) -> Result<Image> {
    integrate_gradient_with(field, anchor, SweepOrder::RowMajor)
}

/// Path integration of a curl-free field. Only the interior differences are
/// used; the zero-extended last row/column entries are implied by the
/// border convention.
pub fn integrate_gradient_with(field: &GradientField, anchor: Anchor, order: SweepOrder) -> Result<Image> {
    let q = field.side;
    if anchor.p1 >= q || anchor.p2 >= q {
        return Err(invalid("anchor pixel outside the grid"));
    }
    let residual = curl_residual(field);
    let tolerance = INTEGRATION_TOLERANCE * field.field.norm(Exponent::Inf, Exponent::Two);
    if residual > tolerance {
        return Err(Error::InconsistentField { residual, tolerance });
    }
    let inv = 1.0 / (field.spacing * field.spacing);
    let x1: Vec<C64> = field.field.column(0).into_iter().map(|z| z * inv).collect();
    let x2: Vec<C64> = field.field.column(1).into_iter().map(|z| z * inv).collect();
    let mut v = vec![C64::new(0.0, 0.0); q * q];
    let idx = |a: usize, b: usize| a * q + b;
    v[idx(anchor.p1, anchor.p2)] = anchor.value;

    // walk along axis 1 (D1) through column `c`, starting from row `r0`
    let walk1 = |v: &mut Vec<C64>, r0: usize, c: usize| {
        for a in r0 + 1..q {
            v[idx(a, c)] = v[idx(a - 1, c)] + x1[idx(a - 1, c)];
        }
        for a in (0..r0).rev() {
            v[idx(a, c)] = v[idx(a + 1, c)] - x1[idx(a, c)];
        }
    };
    let walk2 = |v: &mut Vec<C64>, r: usize, c0: usize| {
        for b in c0 + 1..q {
            v[idx(r, b)] = v[idx(r, b - 1)] + x2[idx(r, b - 1)];
        }
        for b in (0..c0).rev() {
            v[idx(r, b)] = v[idx(r, b + 1)] - x2[idx(r, b)];
        }
    };
    match order {
        SweepOrder::RowMajor => {
            walk1(&mut v, anchor.p1, anchor.p2);
            for a in 0..q {
                walk2(&mut v, a, anchor.p2);
            }
        }
        SweepOrder::ColumnMajor => {
            walk2(&mut v, anchor.p1, anchor.p2);
            for b in 0..q {
                walk1(&mut v, anchor.p1, b);
            }
        }
    }
    Image::from_values(q, field.spacing, v)
}

/// Least-squares integration: minimizes the squared mismatch between the
/// interior differences of `V` and `X / l^2`, with `V(anchor)` pinned.
/// Solved by conjugate gradients on the graph Laplacian.
pub fn integrate_least_squares(field: &GradientField, anchor: Anchor) -> Result<Image> {
    let q = field.side;
    if anchor.p1 >= q || anchor.p2 >= q {
        return Err(invalid("anchor pixel outside the grid"));
    }
    let m = q * q;
    let inv = 1.0 / (field.spacing * field.spacing);
    let x1: Vec<C64> = field.field.column(0).into_iter().map(|z| z * inv).collect();
    let x2: Vec<C64> = field.field.column(1).into_iter().map(|z| z * inv).collect();
    let pin = anchor.p1 * q + anchor.p2;

    // normal equations D^T D u = D^T x over interior differences, u(pin) = 0
    let apply = |u: &[C64], out: &mut [C64]| {
        for o in out.iter_mut() {
            *o = C64::new(0.0, 0.0);
        }
        for a in 0..q {
            for b in 0..q {
                let j = a * q + b;
                if a + 1 < q {
                    let d = u[j + q] - u[j];
                    out[j + q] += d;
                    out[j] -= d;
                }
                if b + 1 < q {
                    let d = u[j + 1] - u[j];
                    out[j + 1] += d;
                    out[j] -= d;
                }
            }
        }
        out[pin] = C64::new(0.0, 0.0);
    };
    let mut rhs = vec![C64::new(0.0, 0.0); m];
    for a in 0..q {
        for b in 0..q {
            let j = a * q + b;
            if a + 1 < q {
                rhs[j + q] += x1[j];
                rhs[j] -= x1[j];
            }
            if b + 1 < q {
                rhs[j + 1] += x2[j];
                rhs[j] -= x2[j];
            }
        }
    }
    rhs[pin] = C64::new(0.0, 0.0);
    let u = crate::linalg::conjugate_gradient(apply, &rhs, 1e-13, 20 * m);
    let values = u.iter().map(|z| z + anchor.value).collect();
    Image::from_values(q, field.spacing, values)
}

/// `||V||^2 * 4d / (m^{2/d} ||D V||^2)` with `d = 2`.
pub fn poincare_ratio(image: &Image) -> Result<f64> {
    image.require_zero_border()?;
    let (d1, d2) = unscaled_gradient(&image.values, image.side);
    let grad_sq: f64 = d1.iter().chain(&d2).map(|z| norm_sqr(*z)).sum();
    if grad_sq == 0.0 {
        return Err(Error::DivisionByZero("image gradient vanishes".into()));
    }
    let m = image.len() as f64;
    let d = 2.0;
    let v_sq: f64 = image.values.iter().map(|z| norm_sqr(*z)).sum();
    Ok(v_sq * 4.0 * d / (crate::math::powf(m, 2.0 / d) * grad_sq))
}

/// Connected components of the pixel grid after cutting every edge whose
/// difference exceeds `tol`. Returns one label per pixel, labels numbered
/// in order of first appearance.
pub fn cut_components(field: &GradientField, tol: f64) -> (Vec<usize>, usize) {
    let q = field.side;
    let mut label = vec![usize::MAX; q * q];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..q * q {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        queue.push_back(start);
        while let Some(j) = queue.pop_front() {
            let (a, b) = (j / q, j % q);
            let mut visit = |k: usize, open: bool, label: &mut Vec<usize>| {
                if open && label[k] == usize::MAX {
                    label[k] = next;
                    queue.push_back(k);
                }
            };
            if a + 1 < q {
                visit(j + q, abs(field.field.get(j, 0)) <= tol, &mut label);
            }
            if a > 0 {
                visit(j - q, abs(field.field.get(j - q, 0)) <= tol, &mut label);
            }
            if b + 1 < q {
                visit(j + 1, abs(field.field.get(j, 1)) <= tol, &mut label);
            }
            if b > 0 {
                visit(j - 1, abs(field.field.get(j - 1, 1)) <= tol, &mut label);
            }
        }
        next += 1;
    }
    (label, next)
}
