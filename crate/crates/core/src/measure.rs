//! Object data, lifting to gradient data, and noise.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grad::Image;
use crate::math::{cis, norm2, sin, sqrt};
use crate::multivec::MultiVector;
use crate::sensing::{LinearMap, Measurement, SamplingPlan, SensingOperator};
use crate::C64;

/// `y = Phi (l^2 v)` for an image with a zero border.
pub fn forward_measure(image: &Image, op: &SensingOperator) -> Result<Vec<C64>> {
    image.require_zero_border()?;
    if image.side() != op.side() {
        return Err(crate::Error::DimensionMismatch { expected: op.side(), found: image.side() });
    }
    let s = image.spacing() * image.spacing();
    let x: Vec<C64> = image.values().iter().map(|v| v * s).collect();
    op.apply(&x)
}

/// `2 sin(pi t / 2) / (pi t)`, equal to 1 at `t = 0`.
pub fn pixel_sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - (PI * t) * (PI * t) / 24.0
    } else {
        2.0 * sin(PI * t / 2.0) / (PI * t)
    }
}

/// Separable pixel factor `g(xi, zeta)` of a measurement.
pub fn pixel_factor(m: &Measurement) -> f64 {
    pixel_sinc(m.xi) * pixel_sinc(m.zeta)
}

/// Born amplitudes of the pixelated object, one per measurement, each
/// pixel being a square of side `l` centred on its lattice point.
pub fn born_amplitudes(image: &Image, op: &SensingOperator) -> Result<Vec<C64>> {
    let y = forward_measure(image, op)?;
    let n = op.plan().len();
    Ok(op
        .plan()
        .measurements
        .iter()
        .zip(&y)
        .map(|(m, yl)| yl * (m.omega * m.omega * pixel_factor(m) * sqrt(n as f64) / (4.0 * PI)))
        .collect())
}

/// Inverse of [`born_amplitudes`]: `y_l = 4 pi A_l / (omega_l^2 g_l sqrt n)`.
pub fn amplitudes_to_data(amplitudes: &[C64], plan: &SamplingPlan) -> Vec<C64> {
    let n = plan.len() as f64;
    plan.measurements
        .iter()
        .zip(amplitudes)
        .map(|(m, a)| a * (4.0 * PI / (m.omega * m.omega * pixel_factor(m) * sqrt(n))))
        .collect()
}

/// Per-measurement lifting multipliers `(exp(-i pi xi) - 1, exp(-i pi zeta) - 1)`.
pub fn lift_multipliers(m: &Measurement) -> (C64, C64) {
    let one = C64::new(1.0, 0.0);
    (cis(-PI * m.xi) - one, cis(-PI * m.zeta) - one)
}

/// Gradient-domain data `Y_k = (exp(-i pi xi_k) - 1) y` as an `n x 2` multi-vector.
pub fn lift_to_gradient_data(y: &[C64], plan: &SamplingPlan) -> Result<MultiVector> {
    if y.len() != plan.len() {
        return Err(crate::Error::DimensionMismatch { expected: plan.len(), found: y.len() });
    }
    let mut out = MultiVector::zeros(y.len(), 2);
    for (l, (m, yl)) in plan.measurements.iter().zip(y).enumerate() {
        let (a, b) = lift_multipliers(m);
        out.set(l, 0, a * yl);
        out.set(l, 1, b * yl);
    }
    Ok(out)
}

/// A noise draw and its norms in both domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyData {
    pub y: Vec<C64>,
    pub noise: Vec<C64>,
    /// `||e||_2`.
    pub epsilon_object: f64,
    /// `||(E_1, E_2)||_{2,2}` of the lifted noise.
    pub epsilon_gradient: f64,
    /// `sum_k ||E_k||_2`, the greedy stopping level.
    pub epsilon_channel_sum: f64,
}

/// Adds circular complex Gaussian noise scaled so that `||e|| = level ||y||`.
pub fn add_noise(y: &[C64], plan: &SamplingPlan, level: f64, seed: u64) -> Result<NoisyData> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(invalid("noise level must be nonnegative"));
    }
    if y.len() != plan.len() {
        return Err(crate::Error::DimensionMismatch { expected: plan.len(), found: y.len() });
    }
    let zero = C64::new(0.0, 0.0);
    let target = level * norm2(y);
    let mut noise: Vec<C64> = alloc::vec![zero; y.len()];
    if target > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in noise.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *e = C64::new(re, im);
        }
        let raw = norm2(&noise);
        for e in noise.iter_mut() {
            *e *= target / raw;
        }
    }
    let lifted = lift_to_gradient_data(&noise, plan)?;
    let noisy: Vec<C64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(NoisyData {
        y: noisy,
        epsilon_object: norm2(&noise),
        epsilon_gradient: lifted.frobenius(),
        epsilon_channel_sum: norm2(&lifted.column(0)) + norm2(&lifted.column(1)),
        noise,
    })
}

/// Which noise radius is handed to the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonPolicy {
    /// The norm of the realized noise.
    #[default]
    Realized,
    /// Median of the norm under the noise model, `sigma^2` known.
    ChiSquareMedian,
}

/// Median of `sqrt(sum_l w_l |e_l|^2)` for i.i.d. circular Gaussian `e_l`
/// with `E|e_l|^2 = sigma2`, from the Wilson-Hilferty approximation with the
/// Satterthwaite-matched degrees of freedom.
pub fn chi_square_median_radius(sigma2: f64, weights: &[f64]) -> f64 {
    let mean: f64 = weights.iter().sum::<f64>() * sigma2;
    let second: f64 = weights.iter().map(|w| w * w).sum::<f64>() * sigma2 * sigma2;
    if mean <= 0.0 {
        return 0.0;
    }
    // each |e_l|^2 has mean sigma2 and variance sigma2^2
    let dof = 2.0 * mean * mean / second;
    let scale = mean / dof;
    let wh = 1.0 - 2.0 / (9.0 * dof);
    sqrt(scale * dof * wh * wh * wh)
}

/// Radii for the object and gradient data at a relative noise level.
pub fn estimated_epsilons(y: &[C64], plan: &SamplingPlan, level: f64) -> (f64, f64) {
    let n = y.len().max(1) as f64;
    let r = level * norm2(y);
    let sigma2 = r * r / n;
    let ones: Vec<f64> = alloc::vec![1.0; y.len()];
    let weights: Vec<f64> = plan
        .measurements
        .iter()
        .map(|m| {
            let (a, b) = lift_multipliers(m);
            a.norm_sqr() + b.norm_sqr()
        })
        .collect();
    (chi_square_median_radius(sigma2, &ones), chi_square_median_radius(sigma2, &weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::discrete_gradient;
    use crate::sensing::{SamplingMode, Scheme, SchemeConfig};

    fn setup(q: usize, n: usize, seed: u64) -> (SensingOperator, Image) {
        let cfg = SchemeConfig::new(Scheme::Backward, SamplingMode::Continuous, n, 1.0 / q as f64, seed);
        let plan = SamplingPlan::draw(&cfg, q).unwrap();
        let op = SensingOperator::new(&plan, q, &cfg).unwrap();
        let mut img = Image::zeros(q, cfg.spacing).unwrap();
        for a in 1..q - 1 {
            for b in 1..q - 1 {
                img.set(a, b, C64::new(((a * 7 + b * 3) % 5) as f64, (a as f64 - b as f64) * 0.1));
            }
        }
        (op, img)
    }

    #[test]
    fn zero_image_gives_zero_data() {
        let (op, img) = setup(8, 20, 1);
        let zero = Image::zeros(8, img.spacing()).unwrap();
        assert!(forward_measure(&zero, &op).unwrap().iter().all(|z| z.norm() == 0.0));
        let lifted = lift_to_gradient_data(&alloc::vec![C64::new(0.0, 0.0); 20], op.plan()).unwrap();
        assert_eq!(lifted.frobenius(), 0.0);
    }

    #[test]
    fn border_is_required() {
        let (op, mut img) = setup(8, 20, 1);
        img.set(0, 3, C64::new(1.0, 0.0));
        assert!(forward_measure(&img, &op).is_err());
    }

    #[test]
    fn lifting_matches_gradient_data() {
        let (op, img) = setup(8, 30, 2);
        let lifted = lift_to_gradient_data(&forward_measure(&img, &op).unwrap(), op.plan()).unwrap();
        let g = discrete_gradient(&img);
        let direct = MultiVector::from_columns(&[
            op.apply(&g.field().column(0)).unwrap(),
            op.apply(&g.field().column(1)).unwrap(),
        ])
        .unwrap();
        assert!(lifted.sub(&direct).unwrap().frobenius() <= 1e-12 * direct.frobenius());
    }

    #[test]
    fn amplitudes_round_trip() {
        let (op, img) = setup(8, 15, 3);
        let y = forward_measure(&img, &op).unwrap();
        let back = amplitudes_to_data(&born_amplitudes(&img, &op).unwrap(), op.plan());
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn noise_scaling_and_norms() {
        let (op, img) = setup(8, 40, 4);
        let y = forward_measure(&img, &op).unwrap();
        let noisy = add_noise(&y, op.plan(), 0.05, 9).unwrap();
        let diff: Vec<C64> = noisy.y.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!((norm2(&diff) / norm2(&y) - 0.05).abs() < 1e-12);
        assert!(noisy.epsilon_gradient <= 2.0 * core::f64::consts::SQRT_2 * noisy.epsilon_object);
        let clean = add_noise(&y, op.plan(), 0.0, 9).unwrap();
        assert_eq!(clean.y, y);
        assert_eq!(clean.epsilon_object, 0.0);
        assert_eq!(add_noise(&y, op.plan(), 0.05, 9).unwrap(), noisy);
    }

    #[test]
    fn median_radius_is_close_to_realized() {
        let (op, img) = setup(8, 400, 5);
        let y = forward_measure(&img, &op).unwrap();
        let (eo, eg) = estimated_epsilons(&y, op.plan(), 0.1);
        let noisy = add_noise(&y, op.plan(), 0.1, 1).unwrap();
        assert!((eo / noisy.epsilon_object - 1.0).abs() < 0.01);
        assert!((eg / noisy.epsilon_gradient - 1.0).abs() < 0.15);
    }
}
