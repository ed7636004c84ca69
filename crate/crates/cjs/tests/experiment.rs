use cjs::config::{ExperimentConfig, PhantomSpec, SolverKind};
use cjs::experiment::{loglog_slope, noise_sweep, replay, run_experiment};
use cjs::Error;
use cjs_core::bpdn::TvSolveConfig;
use cjs_core::grad::{discrete_gradient, Anchor};
use cjs_core::omp::level_set_reconstruct;
use cjs_core::phantom::{piecewise_phantom, row_sparse, Shape};
use cjs_core::{GradientField, SamplingMode, C64};

fn shapes() -> Vec<Shape> {
    vec![
        Shape::Rect { u0: 0.2, v0: 0.2, u1: 0.6, v1: 0.55, value: C64::new(1.0, 0.0) },
        Shape::Disk { u: 0.62, v: 0.62, r: 0.2, value: C64::new(0.5, 0.5) },
    ]
}

fn small(q: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        phantom: PhantomSpec::Shapes { shapes: shapes() },
        q,
        mode: SamplingMode::OnGrid,
        tv: TvSolveConfig { max_iter: 20000, ..Default::default() },
        seed,
        ..ExperimentConfig::default()
    }
}

#[test]
fn complete_noiseless_data_give_zero_errors() {
    let cfg = ExperimentConfig { mode: SamplingMode::Complete, solvers: vec![SolverKind::Tv, SolverKind::Omp, SolverKind::L1], ..small(12, 0) };
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.n, 144);
    assert_eq!(report.records.len(), 3);
    for r in &report.records {
        assert_eq!(r.status, "ok", "{r:?}");
        for e in [r.rel_l2_object, r.rel_tv, r.gradient_rel_l22] {
            assert!(e.unwrap() <= 1e-6, "{r:?}");
        }
    }
}

#[test]
fn doubling_the_noise_roughly_doubles_the_tv_gradient_error() {
    for seed in 0..10 {
        let cfg = ExperimentConfig { solvers: vec![SolverKind::Tv], noise_levels: vec![0.0, 0.02, 0.04], ..small(16, seed) };
        let report = run_experiment(&cfg).unwrap();
        let err: Vec<f64> = report.records.iter().map(|r| r.gradient_rel_l22.unwrap()).collect();
        assert!(err[0] <= 1e-4, "noiseless row {}", err[0]);
        let ratio = err[2] / err[1];
        assert!((1.4..=2.8).contains(&ratio), "seed {seed}: {err:?}");
        for r in &report.records {
            assert!(r.rel_l2_object.unwrap() >= 0.0 && r.rel_tv.unwrap() >= 0.0);
            assert!((0.0..=1.0).contains(&r.support_jaccard.unwrap()));
        }
    }
}

#[test]
fn solvers_of_one_level_share_the_noise_draw() {
    let cfg = ExperimentConfig { solvers: vec![SolverKind::L1, SolverKind::Tv, SolverKind::Omp], noise_levels: vec![0.05], ..small(12, 4) };
    let report = run_experiment(&cfg).unwrap();
    let eps: Vec<[f64; 3]> = report.records.iter().map(|r| [r.epsilon_object, r.epsilon_gradient, r.epsilon_channel_sum]).collect();
    assert!(eps.windows(2).all(|w| w[0] == w[1]));
    assert!(eps[0][0] > 0.0);
}

#[test]
fn replay_reproduces_the_metrics_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        solvers: vec![SolverKind::Tv, SolverKind::Omp],
        noise_levels: vec![0.0, 0.05],
        out: Some(dir.path().to_path_buf()),
        ..small(12, 9)
    };
    run_experiment(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    assert!(text.contains("\"solvers\""), "config is embedded");
    assert!(!text.contains("runtime"));
    let outcome = replay(dir.path()).unwrap();
    assert!(outcome.identical);
    for f in ["truth.pgm", "plan.json", "measurements_level_0.05.json", "data_level_0.05.csv", "tv_level_0_re.csv", "omp_level_0.05_trace.json", "timings.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sweeps_need_two_levels() {
    assert!(matches!(noise_sweep(&small(12, 0), &[0.1]), Err(Error::Config(_))));
}

#[test]
fn sweep_slopes_are_fitted_per_solver() {
    let cfg = ExperimentConfig { solvers: vec![SolverKind::Omp], ..small(16, 2) };
    let sweep = noise_sweep(&cfg, &[0.0, 0.01, 0.02, 0.04]).unwrap();
    assert_eq!(sweep.fits.len(), 1);
    let g = sweep.fits[0].gradient_slope.unwrap();
    assert!((0.75..=1.25).contains(&g), "{g}");
}

#[test]
fn loglog_slope_of_a_power_law() {
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|x: &f64| (*x, 3.0 * x.powf(-0.5))).collect();
    assert!((loglog_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(loglog_slope(&[(1.0, 1.0)]), None);
    assert_eq!(loglog_slope(&[(0.0, 1.0), (1.0, 2.0)]), None);
}

/// A gradient perturbation of fixed unscaled size spread over the edge
/// rows moves the recovered level values like `l^{1/2}`.
#[test]
fn level_values_drift_like_the_square_root_of_the_spacing() {
    let eps = 0.05;
    let mut pts = Vec::new();
    for q in [16usize, 32, 64] {
        let l = 1.0 / q as f64;
        let truth = piecewise_phantom(&shapes(), q, l).unwrap();
        let x = discrete_gradient(&truth).into_field();
        let support = x.row_support(0.0);
        let mut total = 0.0;
        for seed in 0..10 {
            let noise = row_sparse(support.len(), 2, support.len(), (0.5, 1.0), seed).unwrap();
            let mut w = cjs_core::MultiVector::zeros(q * q, 2);
            for (k, &i) in support.indices().iter().enumerate() {
                w.row_mut(i).copy_from_slice(noise.row(k));
            }
            let w = w.scale(C64::new(eps * l * l / w.frobenius(), 0.0));
            let field = GradientField::new(q, l, x.add(&w).unwrap()).unwrap();
            let rec = level_set_reconstruct(&field, Anchor::default(), 0.0).unwrap();
            total += rec.image.sub(&truth).unwrap().values().iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        pts.push((l, total / 10.0));
    }
    let k = loglog_slope(&pts).unwrap();
    assert!((0.3..=0.7).contains(&k), "{k} {pts:?}");
}
