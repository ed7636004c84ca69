use cjs_core::grad::{curl_residual, discrete_gradient, integrate_gradient, tv_norm, Anchor};
use cjs_core::measure::{add_noise, forward_measure, lift_to_gradient_data};
use cjs_core::sensing::Representation;
use cjs_core::*;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn multivec(rows: usize, cols: usize) -> impl Strategy<Value = MultiVector> {
    prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), rows * cols)
        .prop_map(move |v| MultiVector::from_row_major(rows, cols, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap())
}

fn bordered_image(q: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), (q - 2) * (q - 2)).prop_map(move |v| {
        let mut img = Image::zeros(q, 1.0 / q as f64).unwrap();
        for (k, (a, b)) in v.into_iter().enumerate() {
            img.set(1 + k / (q - 2), 1 + k % (q - 2), c(a, b));
        }
        img
    })
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Backward), Just(Scheme::Forward)]
}

fn mode() -> impl Strategy<Value = SamplingMode> {
    prop_oneof![Just(SamplingMode::Continuous), Just(SamplingMode::OnGrid)]
}

fn operator(q: usize, n: usize, scheme: Scheme, mode: SamplingMode, seed: u64) -> SensingOperator {
    let cfg = SchemeConfig::new(scheme, mode, n, 1.0 / q as f64, seed);
    let plan = SamplingPlan::draw(&cfg, q).unwrap();
    SensingOperator::new(&plan, q, &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixed_norms_are_subadditive(a in multivec(6, 3), b in multivec(6, 3)) {
        let sum = a.add(&b).unwrap();
        for (p, r) in [(Exponent::One, Exponent::Two), (Exponent::Two, Exponent::Two), (Exponent::Inf, Exponent::Two)] {
            prop_assert!(sum.norm(p, r) <= a.norm(p, r) + b.norm(p, r) + 1e-12);
        }
    }

    #[test]
    fn frobenius_splits_over_row_partitions(x in multivec(10, 2), mask in prop::collection::vec(any::<bool>(), 10)) {
        let left: Vec<usize> = (0..10).filter(|&i| mask[i]).collect();
        let right: Vec<usize> = (0..10).filter(|&i| !mask[i]).collect();
        let a = x.restrict(&SupportSet::new(left, 10).unwrap()).frobenius();
        let b = x.restrict(&SupportSet::new(right, 10).unwrap()).frobenius();
        prop_assert!((a * a + b * b - x.frobenius().powi(2)).abs() <= 1e-10 * (1.0 + x.frobenius().powi(2)));
    }

    #[test]
    fn best_approximation_tail_shrinks(x in multivec(12, 2)) {
        let mut prev = f64::INFINITY;
        for s in 0..=12 {
            let tail = x.sub(&x.best_s_row_approx(s).unwrap()).unwrap().norm(Exponent::One, Exponent::Two);
            prop_assert!(tail <= prev + 1e-12);
            prev = tail;
        }
        prop_assert!(prev == 0.0);
    }

    #[test]
    fn gradient_is_linear(u in bordered_image(8), v in bordered_image(8), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let (ca, cb) = (c(a, 0.5), c(-0.25, b));
        let combo = Image::from_values(8, u.spacing(), u.values().iter().zip(v.values()).map(|(x, y)| x * ca + y * cb).collect()).unwrap();
        let lhs = discrete_gradient(&combo);
        let rhs = discrete_gradient(&u).field().scale(ca).add(&discrete_gradient(&v).field().scale(cb)).unwrap();
        prop_assert!(lhs.field().sub(&rhs).unwrap().frobenius() <= 1e-13 * (1.0 + rhs.frobenius()));
    }

    #[test]
    fn integration_inverts_the_gradient(v in bordered_image(9)) {
        let g = discrete_gradient(&v);
        prop_assert!(curl_residual(&g) <= 1e-14 * (1.0 + g.field().frobenius()));
        let back = integrate_gradient(&g, Anchor::default()).unwrap();
        prop_assert!(back.sub(&v).unwrap().norm2() <= 1e-12 * (1.0 + v.norm2()));
    }

    #[test]
    fn tv_equals_row_norm_of_scaled_gradient(v in bordered_image(7)) {
        let l2 = v.spacing() * v.spacing();
        let g = discrete_gradient(&v).field().scale(c(1.0 / l2, 0.0));
        let tv = tv_norm(&v, TvMode::Isotropic);
        prop_assert!((tv - g.norm(Exponent::One, Exponent::Two)).abs() <= 1e-10 * (1.0 + tv));
    }

    #[test]
    fn operator_adjoint_pair(seed in 0..1000u64, s in scheme(), m in mode()) {
        let op = operator(8, 37, s, m, seed);
        let mut rng = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let x: Vec<C64> = (0..64).map(|_| c(next(), next())).collect();
        let y: Vec<C64> = (0..37).map(|_| c(next(), next())).collect();
        let ax = op.apply(&x).unwrap();
        let aty = op.adjoint_apply(&y).unwrap();
        let lhs: C64 = ax.iter().zip(&y).map(|(a, b)| b.conj() * a).sum();
        let rhs: C64 = x.iter().zip(&aty).map(|(a, b)| b.conj() * a).sum();
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * nx * ny);
    }

    #[test]
    fn representations_agree(seed in 0..1000u64, m in mode(), v in bordered_image(8)) {
        let op = operator(8, 50, Scheme::Backward, m, seed);
        let reference = op.clone().with_representation(Representation::Explicit).unwrap().apply(v.values()).unwrap();
        let separable = op.with_representation(Representation::Separable).unwrap().apply(v.values()).unwrap();
        let scale = reference.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for (a, b) in reference.iter().zip(&separable) {
            prop_assert!((a - b).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn lifting_commutes_with_the_gradient(seed in 0..1000u64, s in scheme(), m in mode(), v in bordered_image(8)) {
        let op = operator(8, 40, s, m, seed);
        let lifted = lift_to_gradient_data(&forward_measure(&v, &op).unwrap(), op.plan()).unwrap();
        let x = discrete_gradient(&v).into_field();
        let direct = MultiVector::from_columns(&[op.apply(&x.column(0)).unwrap(), op.apply(&x.column(1)).unwrap()]).unwrap();
        prop_assert!(lifted.sub(&direct).unwrap().frobenius() <= 1e-10 * direct.frobenius());
    }

    #[test]
    fn noise_is_reproducible_and_bounded(seed in 0..1000u64, level in 0.0..0.5f64, v in bordered_image(8)) {
        let op = operator(8, 30, Scheme::Forward, SamplingMode::Continuous, 7);
        let y = forward_measure(&v, &op).unwrap();
        let a = add_noise(&y, op.plan(), level, seed).unwrap();
        prop_assert_eq!(&a, &add_noise(&y, op.plan(), level, seed).unwrap());
        prop_assert!(a.epsilon_gradient <= 2.0 * std::f64::consts::SQRT_2 * a.epsilon_object * (1.0 + 1e-12));
    }
}

#[test]
fn plans_satisfy_their_invariants_over_many_seeds() {
    for s in [Scheme::Backward, Scheme::Forward] {
        for m in [SamplingMode::Continuous, SamplingMode::OnGrid] {
            for seed in 0..1000 {
                let cfg = SchemeConfig::new(s, m, 16, 1.0 / 16.0, seed);
                let plan = SamplingPlan::draw(&cfg, 16).unwrap();
                let check = plan.check_invariants(&cfg);
                assert!(check.ok, "{s:?} {m:?} seed {seed}: {check:?}");
                assert!(check.max_rho <= std::f64::consts::SQRT_2 + 1e-12);
            }
        }
    }
}

#[test]
fn physical_phase_matches_fourier_phase_on_the_grid() {
    for s in [Scheme::Backward, Scheme::Forward] {
        let op = operator(16, 40, s, SamplingMode::Continuous, 3);
        for l in 0..40 {
            for j in (0..256).step_by(7) {
                assert!((op.entry(l, j) - op.physical_entry(l, j)).norm() <= 1e-10);
            }
        }
    }
}

#[test]
fn exact_sampling_is_rejected_for_the_backward_scheme() {
    let cfg = SchemeConfig::new(Scheme::Backward, SamplingMode::Continuous, 1, 0.1, 0);
    assert!(sensing::Measurement::from_angles(0.3, 0.3, cfg.omega, &cfg).is_err());
}

#[test]
fn shepp_logan_asymmetry_comes_from_the_off_axis_ellipses() {
    let q = 64;
    let img = phantom::shepp_logan(q, 1.0 / q as f64).unwrap();
    let h = 2.0 / (q - 1) as f64;
    // pixel (x, y) within one pixel of an ellipse, or of its mirror image
    let near = |x: f64, y: f64, e: &[f64; 6]| {
        let t = e[5].to_radians();
        [1.0, -1.0].iter().any(|&sx| {
            let (dx, dy) = (sx * x - e[3], y - e[4]);
            let xr = dx * t.cos() + dy * t.sin();
            let yr = -dx * t.sin() + dy * t.cos();
            (xr / (e[1] + h)).powi(2) + (yr / (e[2] + h)).powi(2) <= 1.0
        })
    };
    let off_axis: Vec<&[f64; 6]> = phantom::SHEPP_LOGAN.iter().filter(|e| e[3] != 0.0).collect();
    let mut asymmetric = 0;
    for p1 in 0..q {
        for p2 in 0..q {
            if (img.get(p1, p2) - img.get(p1, q - 1 - p2)).norm() > 1e-12 {
                asymmetric += 1;
                let (x, y) = (-1.0 + p2 as f64 * h, 1.0 - p1 as f64 * h);
                assert!(off_axis.iter().any(|e| near(x, y, e)), "pixel ({p1}, {p2})");
            }
        }
    }
    assert!(asymmetric > 0);
    assert!(img.values().iter().all(|z| (0.0..=1.0).contains(&z.re)));
}

#[test]
fn gradient_sparsity_doubles_with_resolution() {
    let disk = [phantom::Shape::Disk { u: 0.5, v: 0.45, r: 0.3, value: c(1.0, 0.0) }];
    let coarse = phantom::gradient_sparsity(&phantom::piecewise_phantom(&disk, 32, 1.0 / 32.0).unwrap());
    let fine = phantom::gradient_sparsity(&phantom::piecewise_phantom(&disk, 64, 1.0 / 64.0).unwrap());
    let ratio = fine as f64 / coarse as f64;
    assert!((1.8..=2.2).contains(&ratio), "{coarse} -> {fine}");
}
