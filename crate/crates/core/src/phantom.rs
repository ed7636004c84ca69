//! Test objects: the Shepp-Logan head, unions of rectangles and disks, and
//! point scatterers.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grad::{discrete_gradient, Image};
use crate::math::{cis, cos, round, sin};
use crate::multivec::MultiVector;
use crate::C64;

/// `(intensity, semi-axis a, semi-axis b, x0, y0, tilt in degrees)` with
/// the contrast-enhanced intensities.
pub const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Shepp-Logan phantom sampled at `x_k = -1 + 2k/(q-1)`; row `p1` runs from
/// `y = 1` down to `y = -1`. Values are snapped to `1e-9` and clamped to
/// `[0, 1]` so that equal regions compare equal.
pub fn shepp_logan(q: usize, spacing: f64) -> Result<Image> {
    if q < 32 {
        return Err(invalid(format!("Shepp-Logan needs q >= 32, got {q}")));
    }
    let coord = |k: usize| -1.0 + 2.0 * k as f64 / (q - 1) as f64;
    let mut values = Vec::with_capacity(q * q);
    for p1 in 0..q {
        let y = coord(q - 1 - p1);
        for p2 in 0..q {
            let x = coord(p2);
            let mut v = 0.0;
            for [amp, a, b, x0, y0, tilt] in SHEPP_LOGAN {
                let t = tilt * PI / 180.0;
                let (c, s) = (cos(t), sin(t));
                let xr = (x - x0) * c + (y - y0) * s;
                let yr = -(x - x0) * s + (y - y0) * c;
                if (xr / a) * (xr / a) + (yr / b) * (yr / b) <= 1.0 {
                    v += amp;
                }
            }
            let snapped = round(v * 1e9) / 1e9;
            values.push(C64::new(snapped.clamp(0.0, 1.0), 0.0));
        }
    }
    Image::from_values(q, spacing, values)
}

/// Region of a piecewise-constant object in unit coordinates: `u` runs
/// along `p1`, `v` along `p2`, pixel `p` has centre `((p1+1/2)/q, (p2+1/2)/q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Rect { u0: f64, v0: f64, u1: f64, v1: f64, value: C64 },
    Disk { u: f64, v: f64, r: f64, value: C64 },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { u0, v0, u1, v1, .. } => u >= u0 && u < u1 && v >= v0 && v < v1,
            Shape::Disk { u: cu, v: cv, r, .. } => (u - cu) * (u - cu) + (v - cv) * (v - cv) <= r * r,
        }
    }

    fn value(&self) -> C64 {
        match *self {
            Shape::Rect { value, .. } | Shape::Disk { value, .. } => value,
        }
    }
}

/// Sum of indicator functions of the shapes. Fails if any shape reaches the
/// one-pixel border.
pub fn piecewise_phantom(shapes: &[Shape], q: usize, spacing: f64) -> Result<Image> {
    let mut img = Image::zeros(q, spacing)?;
    for p1 in 0..q {
        for p2 in 0..q {
            let (u, v) = ((p1 as f64 + 0.5) / q as f64, (p2 as f64 + 0.5) / q as f64);
            let mut acc = C64::new(0.0, 0.0);
            for s in shapes {
                if s.contains(u, v) {
                    acc += s.value();
                }
            }
            img.set(p1, p2, acc);
        }
    }
    if !img.has_zero_border() {
        return Err(Error::Precondition("shapes reach the one-pixel border".into()));
    }
    Ok(img)
}

/// Number of nonzero gradient rows.
pub fn gradient_sparsity(image: &Image) -> usize {
    discrete_gradient(image).field().row_support(0.0).len()
}

fn random_values(rng: &mut ChaCha8Rng, count: usize, range: (f64, f64)) -> Vec<C64> {
    (0..count)
        .map(|_| {
            let r: f64 = if range.1 > range.0 { rng.random_range(range.0..=range.1) } else { range.0 };
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            cis(phase) * r
        })
        .collect()
}

fn check_range(m: usize, s: usize, range: (f64, f64)) -> Result<()> {
    if s > m {
        return Err(invalid(format!("sparsity {s} exceeds length {m}")));
    }
    if !(range.0 >= 0.0 && range.1 >= range.0 && range.1.is_finite()) {
        return Err(invalid("modulus range must satisfy 0 <= lo <= hi"));
    }
    Ok(())
}

/// `s` point scatterers at distinct random locations with moduli in `range`
/// and uniform phases.
pub fn point_phantom(m: usize, s: usize, range: (f64, f64), seed: u64) -> Result<Vec<C64>> {
    check_range(m, s, range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, m, s).into_vec();
    let vals = random_values(&mut rng, s, range);
    let mut out = alloc::vec![C64::new(0.0, 0.0); m];
    for (i, v) in idx.into_iter().zip(vals) {
        out[i] = v;
    }
    Ok(out)
}

/// `m x d` multi-vector with `s` random nonzero rows whose entries have
/// moduli in `range`.
pub fn row_sparse(m: usize, d: usize, s: usize, range: (f64, f64), seed: u64) -> Result<MultiVector> {
    check_range(m, s, range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, m, s).into_vec();
    let mut out = MultiVector::zeros(m, d);
    for i in idx {
        let vals = random_values(&mut rng, d, range);
        out.row_mut(i).copy_from_slice(&vals);
    }
    Ok(out)
}
