//! The experiment pipeline: phantom, plan, data, noise, solvers, metrics.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cjs_core::bpdn::{check_bp_bound, solve_bpdn_rowsparse, solve_tvmin, BpBoundCheck, BpdnConfig, SolveReport, StopReason, TvSolveConfig};
use cjs_core::grad::{discrete_gradient, Anchor};
use cjs_core::measure::{add_noise, estimated_epsilons, forward_measure, lift_to_gradient_data, EpsilonPolicy, NoisyData};
use cjs_core::metrics::{gradient_rel_l22, match_gauge, rel_l2, rel_tv};
use cjs_core::omp::{check_omp_condition, constrained_ls_refit, level_set_reconstruct, omp_cjs, omp_error_bound, LevelSets, OmpCondition, OmpConfig, OmpStop, OmpTrace, Refit};
use cjs_core::phantom::{gradient_sparsity, piecewise_phantom, point_phantom, Shape};
use cjs_core::sensing::{mutual_coherence, COHERENCE_BUDGET};
use cjs_core::{GradientField, Image, LinearMap, MultiVector, SamplingMode, SamplingPlan, Scheme, SchemeConfig, SensingOperator, SupportSet, TvMode, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OmpOptions, SolverKind};
use crate::error::{Error, Result};
use crate::io::{self, MeasurementHeader, MeasurementSet};

/// Rows of a gradient below this fraction of the largest row count as zero
/// when supports are compared.
pub const SUPPORT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub solver: SolverKind,
    pub noise_level: f64,
    /// `ok`, `max_iter`, `max_support` or `error: <message>`.
    pub status: String,
    pub epsilon_object: f64,
    pub epsilon_gradient: f64,
    pub epsilon_channel_sum: f64,
    /// The radius handed to this solver.
    pub epsilon_used: f64,
    pub iterations: usize,
    pub rel_l2_object: Option<f64>,
    pub rel_tv: Option<f64>,
    pub gradient_rel_l22: Option<f64>,
    pub support_jaccard: Option<f64>,
    pub recovered_sparsity: Option<usize>,
    pub tv_bound: Option<BpBoundCheck>,
    pub omp_condition: Option<OmpCondition>,
    pub omp_bound: Option<f64>,
    /// Kept out of the metrics file so that replays compare byte for byte.
    #[serde(skip)]
    pub runtime_s: f64,
}

impl MetricsRecord {
    pub fn converged(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub spacing: f64,
    pub omega: f64,
    pub n: usize,
    pub gradient_sparsity: usize,
    pub coherence: Option<f64>,
    pub records: Vec<MetricsRecord>,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    solver: SolverKind,
    noise_level: f64,
    runtime_s: f64,
}

/// Everything shared by the cells of one experiment.
pub struct Prepared {
    pub image: Image,
    pub sparsity: usize,
    pub scheme: SchemeConfig,
    pub plan: SamplingPlan,
    pub op: SensingOperator,
    pub y: Vec<C64>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let image = cfg.phantom()?;
    let sparsity = gradient_sparsity(&image);
    let scheme = cfg.scheme_config(cfg.measurement_count(sparsity));
    let plan = SamplingPlan::draw(&scheme, cfg.q)?;
    let op = SensingOperator::new(&plan, cfg.q, &scheme)?;
    let y = forward_measure(&image, &op)?;
    Ok(Prepared { image, sparsity, scheme, plan, op, y })
}

/// Noise for every level is the same draw, rescaled, so that levels are
/// directly comparable.
pub fn noise_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_add(1)
}

/// Noisy data, lifted data and the radii `(object, gradient, channel sum)`
/// selected by the epsilon policy.
pub fn noisy_data(prep: &Prepared, cfg: &ExperimentConfig, level: f64) -> Result<(NoisyData, MultiVector, [f64; 3])> {
    let noisy = add_noise(&prep.y, &prep.plan, level, noise_seed(cfg))?;
    let by = lift_to_gradient_data(&noisy.y, &prep.plan)?;
    let eps = match cfg.epsilon_policy {
        EpsilonPolicy::Realized => [noisy.epsilon_object, noisy.epsilon_gradient, noisy.epsilon_channel_sum],
        EpsilonPolicy::ChiSquareMedian => {
            let (o, g) = estimated_epsilons(&noisy.y, &prep.plan, level);
            // two channels of comparable energy
            [o, g, g * std::f64::consts::SQRT_2]
        }
    };
    Ok((noisy, by, eps))
}

pub fn measurement_set(prep: &Prepared, cfg: &ExperimentConfig, level: f64, noisy: &NoisyData, by: &MultiVector, plan_file: &str, data_file: &str) -> MeasurementSet {
    MeasurementSet {
        header: MeasurementHeader {
            n: prep.plan.len(),
            q: cfg.q,
            spacing: prep.scheme.spacing,
            scheme: prep.scheme.scheme,
            mode: prep.scheme.mode,
            gamma: prep.scheme.gamma,
            omega: prep.scheme.omega,
            seed: cfg.seed,
            noise_seed: noise_seed(cfg),
            noise_level: level,
            epsilon_object: noisy.epsilon_object,
            epsilon_gradient: noisy.epsilon_gradient,
            epsilon_channel_sum: noisy.epsilon_channel_sum,
            plan_file: plan_file.to_string(),
            data_file: data_file.to_string(),
        },
        y: noisy.y.clone(),
        by: by.clone(),
    }
}

pub fn reconstruct_tv(op: &SensingOperator, y: &[C64], epsilon: f64, cfg: &TvSolveConfig) -> Result<(Image, SolveReport)> {
    let t = Instant::now();
    let (img, mut rep) = solve_tvmin(op, y, &TvSolveConfig { epsilon, ..*cfg })?;
    rep.wall_time_s = t.elapsed().as_secs_f64();
    Ok((img, rep))
}

/// Plain `l1` basis pursuit on `x = l^2 v`, returned as an image.
pub fn reconstruct_l1(op: &SensingOperator, y: &[C64], epsilon: f64, cfg: &BpdnConfig) -> Result<(Image, SolveReport)> {
    let t = Instant::now();
    let by = MultiVector::from_columns(&[y.to_vec()])?;
    let ops: [&dyn LinearMap; 1] = [op];
    let (z, mut rep) = solve_bpdn_rowsparse(&ops, &by, epsilon, cfg)?;
    rep.wall_time_s = t.elapsed().as_secs_f64();
    let l2 = op.spacing() * op.spacing();
    let values = z.column(0).into_iter().map(|v| v / l2).collect();
    Ok((Image::from_values(op.side(), op.spacing(), values)?, rep))
}

#[derive(Debug, Clone)]
pub struct OmpOutcome {
    pub support: SupportSet,
    pub trace: OmpTrace,
    pub refit: Refit,
    pub levels: LevelSets,
}

/// Joint OMP on gradient data stopped at `epsilon` (channel sum), then the
/// curl-constrained refit on the support and level-set integration.
pub fn reconstruct_omp(op: &SensingOperator, by: &MultiVector, epsilon: f64, opts: &OmpOptions) -> Result<OmpOutcome> {
    let ops: [&dyn LinearMap; 1] = [op];
    let (support, _, trace) = omp_cjs(&ops, by, &OmpConfig { epsilon, max_support: opts.max_support })?;
    let refit = constrained_ls_refit(&ops, by, &support)?;
    let field = GradientField::new(op.side(), op.spacing(), refit.x.clone())?;
    let levels = level_set_reconstruct(&field, Anchor::default(), opts.edge_tol)?;
    Ok(OmpOutcome { support, trace, refit, levels })
}

/// Support of a gradient, ignoring rows below `SUPPORT_TOL` of the largest.
pub fn gradient_support(x: &MultiVector) -> SupportSet {
    let peak = (0..x.rows()).map(|i| x.row_norm(i)).fold(0.0, f64::max);
    x.row_support(SUPPORT_TOL * peak)
}

/// `X = l^2 grad(v)`, the unknown of the gradient data.
fn scaled_gradient(img: &Image) -> MultiVector {
    discrete_gradient(img).into_field()
}

struct Cell<'a> {
    prep: &'a Prepared,
    cfg: &'a ExperimentConfig,
    coherence: Option<f64>,
    dir: Option<PathBuf>,
}

impl Cell<'_> {
    fn blank(&self, solver: SolverKind, level: f64, eps: [f64; 3], used: f64) -> MetricsRecord {
        MetricsRecord {
            solver,
            noise_level: level,
            status: "ok".to_string(),
            epsilon_object: eps[0],
            epsilon_gradient: eps[1],
            epsilon_channel_sum: eps[2],
            epsilon_used: used,
            iterations: 0,
            rel_l2_object: None,
            rel_tv: None,
            gradient_rel_l22: None,
            support_jaccard: None,
            recovered_sparsity: None,
            tv_bound: None,
            omp_condition: None,
            omp_bound: None,
            runtime_s: 0.0,
        }
    }

    fn image_metrics(&self, rec: &mut MetricsRecord, est: &Image) -> Result<()> {
        let truth = &self.prep.image;
        rec.rel_l2_object = Some(rel_l2(truth, est)?);
        rec.rel_tv = Some(rel_tv(truth, est, TvMode::Isotropic)?);
        rec.gradient_rel_l22 = Some(gradient_rel_l22(truth, est)?);
        Ok(())
    }

    fn write_image(&self, name: &str, img: &Image) -> Result<()> {
        match &self.dir {
            Some(d) => io::write_image(d, name, img),
            None => Ok(()),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        match &self.dir {
            Some(d) => io::write_json(&d.join(name), value),
            None => Ok(()),
        }
    }

    fn run(&self, solver: SolverKind, level: f64) -> Result<MetricsRecord> {
        let t = Instant::now();
        let (noisy, by, eps) = noisy_data(self.prep, self.cfg, level)?;
        let truth = &self.prep.image;
        let x = scaled_gradient(truth);
        let true_support = gradient_support(&x);
        let mut rec;
        match solver {
            SolverKind::Tv => {
                rec = self.blank(solver, level, eps, eps[0]);
                let (est, rep) = reconstruct_tv(&self.prep.op, &noisy.y, eps[0], &self.cfg.tv)?;
                let est = match_gauge(truth, &est, Anchor::default())?;
                rec.iterations = rep.iterations;
                if rep.stopping_reason == StopReason::MaxIter {
                    rec.status = "max_iter".to_string();
                }
                self.image_metrics(&mut rec, &est)?;
                let xhat = scaled_gradient(&est);
                let support = gradient_support(&xhat);
                rec.support_jaccard = Some(support.jaccard(&true_support));
                rec.recovered_sparsity = Some(support.len());
                if let Some(delta) = self.cfg.delta2s {
                    // the truth and the estimate both sit in the gradient-data tube
                    let misfit = lift_to_gradient_data(&noisy.y, &self.prep.plan)?
                        .sub(&apply_channels(&self.prep.op, &xhat)?)?
                        .frobenius();
                    let eps_eff = eps[1].max(misfit);
                    rec.tv_bound = Some(check_bp_bound(&x, &xhat, self.prep.sparsity.max(1), eps_eff, delta)?);
                }
                self.write_image(&format!("tv_{}", level_tag(level)), &est)?;
                self.write_json(&format!("tv_{}_report.json", level_tag(level)), &rep)?;
            }
            SolverKind::Omp => {
                rec = self.blank(solver, level, eps, eps[2]);
                let out = reconstruct_omp(&self.prep.op, &by, eps[2], &self.cfg.omp)?;
                let est = match_gauge(truth, &out.levels.image, Anchor::default())?;
                rec.iterations = out.trace.iterations();
                if out.trace.stop == OmpStop::MaxSupport && out.trace.residual_sum.last().copied().unwrap_or(0.0) > eps[2] {
                    rec.status = "max_support".to_string();
                }
                self.image_metrics(&mut rec, &est)?;
                rec.support_jaccard = Some(out.support.jaccard(&true_support));
                rec.recovered_sparsity = Some(out.support.len());
                if let Some(mu) = self.coherence {
                    let s = true_support.len().max(1);
                    rec.omp_condition = Some(check_omp_condition(s, mu, eps[2], &x, 2)?);
                    rec.omp_bound = omp_error_bound(eps[1], mu, s).ok();
                }
                self.write_image(&format!("omp_{}", level_tag(level)), &est)?;
                self.write_json(&format!("omp_{}_trace.json", level_tag(level)), &out.trace)?;
            }
            SolverKind::L1 => {
                rec = self.blank(solver, level, eps, eps[0]);
                let (est, rep) = reconstruct_l1(&self.prep.op, &noisy.y, eps[0], &self.cfg.l1)?;
                rec.iterations = rep.iterations;
                if rep.stopping_reason == StopReason::MaxIter {
                    rec.status = "max_iter".to_string();
                }
                self.image_metrics(&mut rec, &est)?;
                let support = gradient_support(&scaled_gradient(&est));
                rec.support_jaccard = Some(support.jaccard(&true_support));
                rec.recovered_sparsity = Some(support.len());
                self.write_image(&format!("l1_{}", level_tag(level)), &est)?;
                self.write_json(&format!("l1_{}_report.json", level_tag(level)), &rep)?;
            }
        }
        rec.runtime_s = t.elapsed().as_secs_f64();
        Ok(rec)
    }
}

/// `phi` applied to each column of `x`.
pub fn apply_channels(op: &SensingOperator, x: &MultiVector) -> Result<MultiVector> {
    let cols = (0..x.cols()).map(|j| op.apply(&x.column(j))).collect::<cjs_core::Result<Vec<_>>>()?;
    Ok(MultiVector::from_columns(&cols)?)
}

/// File-name tag of a noise level: `0.05` becomes `level_0.05`.
pub fn level_tag(level: f64) -> String {
    format!("level_{level}")
}

fn writable_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Config(format!("output directory {}: {e}", path.display())))
}

/// Runs every (noise level, solver) cell. Solver failures become records
/// with an `error:` status. With `cfg.out` set, writes the truth, the plan,
/// one measurement set per level, images and reports per cell,
/// `metrics.json` and `timings.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let prep = prepare(cfg)?;
    let dir = cfg.out.clone();
    if let Some(d) = &dir {
        writable_dir(d)?;
        io::write_image(d, "truth", &prep.image)?;
        io::write_plan(&d.join("plan.json"), &prep.plan)?;
        for &level in &cfg.noise_levels {
            let (noisy, by, _) = noisy_data(&prep, cfg, level)?;
            let tag = level_tag(level);
            let set = measurement_set(&prep, cfg, level, &noisy, &by, "plan.json", &format!("data_{tag}.csv"));
            io::write_measurements(&d.join(format!("measurements_{tag}.json")), &set)?;
        }
    }
    let coherence = if cfg.solvers.contains(&SolverKind::Omp) && cfg.q * cfg.q <= COHERENCE_BUDGET {
        Some(mutual_coherence(&prep.op)?)
    } else {
        None
    };
    let cell = Cell { prep: &prep, cfg, coherence, dir: dir.clone() };
    let jobs: Vec<(f64, SolverKind)> =
        cfg.noise_levels.iter().flat_map(|&l| cfg.solvers.iter().map(move |&s| (l, s))).collect();
    let records: Vec<MetricsRecord> = jobs
        .par_iter()
        .map(|&(level, solver)| {
            cell.run(solver, level).unwrap_or_else(|e| {
                let mut rec = cell.blank(solver, level, [0.0; 3], 0.0);
                rec.status = format!("error: {e}");
                rec
            })
        })
        .collect();
    let report = ExperimentReport {
        config: cfg.clone(),
        spacing: prep.scheme.spacing,
        omega: prep.scheme.omega,
        n: prep.plan.len(),
        gradient_sparsity: prep.sparsity,
        coherence,
        records,
    };
    if let Some(d) = &dir {
        io::write_json(&d.join("metrics.json"), &report)?;
        let timings: Vec<Timing> = report
            .records
            .iter()
            .map(|r| Timing { solver: r.solver, noise_level: r.noise_level, runtime_s: r.runtime_s })
            .collect();
        io::write_json(&d.join("timings.json"), &timings)?;
    }
    Ok(report)
}

/// Least-squares slope of `ln y` against `ln x` over the positive pairs.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub solver: SolverKind,
    /// Slope of `gradient_rel_l22` against the noise level.
    pub gradient_slope: Option<f64>,
    /// Slope of `rel_l2_object` against the noise level.
    pub object_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub report: ExperimentReport,
    pub fits: Vec<SweepFit>,
}

/// Runs the experiment at each level and fits log-log slopes per solver.
pub fn noise_sweep(cfg: &ExperimentConfig, levels: &[f64]) -> Result<NoiseSweep> {
    if levels.len() < 2 {
        return Err(Error::Config("a sweep needs at least two noise levels".into()));
    }
    let cfg = ExperimentConfig { noise_levels: levels.to_vec(), ..cfg.clone() };
    let report = run_experiment(&cfg)?;
    let fits = cfg
        .solvers
        .iter()
        .map(|&solver| {
            let rows: Vec<&MetricsRecord> = report.records.iter().filter(|r| r.solver == solver).collect();
            let fit = |f: fn(&MetricsRecord) -> Option<f64>| {
                loglog_slope(&rows.iter().filter_map(|r| f(r).map(|e| (r.noise_level, e))).collect::<Vec<_>>())
            };
            SweepFit { solver, gradient_slope: fit(|r| r.gradient_rel_l22), object_slope: fit(|r| r.rel_l2_object) }
        })
        .collect();
    if let Some(d) = &cfg.out {
        io::write_json(&d.join("sweep.json"), &fits)?;
    }
    Ok(NoiseSweep { report, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingRow {
    pub q: usize,
    pub spacing: f64,
    pub sparsity: usize,
    pub n: usize,
    /// Mean of `||v_hat - v||_2` over seeds.
    pub mean_error: f64,
    pub exact_support: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSweep {
    pub epsilon: f64,
    pub rows: Vec<SpacingRow>,
    /// Slope of the mean error against the spacing.
    pub slope: Option<f64>,
}

/// OMP object error against the grid spacing at a fixed noise size.
///
/// The noise is a gradient perturbation `W = l^2 grad(dV)` where `dV`
/// assigns fresh random values to the same shapes, scaled so that
/// `||W||_{2,2} = epsilon l^2`. It lies on the true support, so the greedy
/// selection is unaffected and the error isolates the refit and the
/// integration. Each run uses on-grid backward sampling with
/// `n = n_per_sparsity * s` and stops at `sum_j ||E_j||`.
pub fn omp_spacing_sweep(shapes: &[Shape], qs: &[usize], epsilon: f64, n_per_sparsity: usize, seeds: u64) -> Result<SpacingSweep> {
    let rows = qs
        .iter()
        .map(|&q| {
            let l = 1.0 / q as f64;
            let truth = piecewise_phantom(shapes, q, l)?;
            let x = scaled_gradient(&truth);
            let s = x.row_support(0.0).len();
            let n = (n_per_sparsity * s).min(4 * q * q);
            let runs = (0..seeds)
                .into_par_iter()
                .map(|seed| -> Result<(f64, bool)> {
                    let vals = point_phantom(shapes.len(), shapes.len(), (0.5, 1.0), seed)?;
                    let perturbed: Vec<Shape> = shapes.iter().zip(&vals).map(|(s, v)| with_value(s, *v)).collect();
                    let w0 = scaled_gradient(&piecewise_phantom(&perturbed, q, l)?);
                    let w = w0.scale(C64::new(epsilon * l * l / w0.frobenius(), 0.0));
                    let cfg = SchemeConfig::new(Scheme::Backward, SamplingMode::OnGrid, n, l, seed);
                    let plan = SamplingPlan::draw(&cfg, q)?;
                    let op = SensingOperator::new(&plan, q, &cfg)?;
                    let by = apply_channels(&op, &x.add(&w)?)?;
                    let e = apply_channels(&op, &w)?;
                    let stop: f64 = (0..2).map(|j| e.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).sum();
                    let out = reconstruct_omp(&op, &by, stop, &OmpOptions { max_support: None, edge_tol: 0.0 })?;
                    Ok((out.levels.image.sub(&truth)?.norm2(), out.support == x.row_support(0.0)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SpacingRow {
                q,
                spacing: l,
                sparsity: s,
                n,
                mean_error: runs.iter().map(|r| r.0).sum::<f64>() / seeds as f64,
                exact_support: runs.iter().filter(|r| r.1).count(),
                seeds: seeds as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(&rows.iter().map(|r| (r.spacing, r.mean_error)).collect::<Vec<_>>());
    Ok(SpacingSweep { epsilon, rows, slope })
}

fn with_value(shape: &Shape, value: C64) -> Shape {
    match *shape {
        Shape::Rect { u0, v0, u1, v1, .. } => Shape::Rect { u0, v0, u1, v1, value },
        Shape::Disk { u, v, r, .. } => Shape::Disk { u, v, r, value },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub identical: bool,
    pub original: PathBuf,
    pub replayed: PathBuf,
}

/// Reruns the experiment embedded in `<dir>/metrics.json` into
/// `<dir>/replay` and compares the two metrics files byte for byte.
pub fn replay(dir: &Path) -> Result<ReplayOutcome> {
    let original = dir.join("metrics.json");
    let report: ExperimentReport = io::read_json(&original)?;
    let target = dir.join("replay");
    let cfg = ExperimentConfig { out: Some(target.clone()), ..report.config };
    run_experiment(&cfg)?;
    let replayed = target.join("metrics.json");
    let a = std::fs::read(&original).map_err(|e| Error::io(&original, e))?;
    let b = std::fs::read(&replayed).map_err(|e| Error::io(&replayed, e))?;
    Ok(ReplayOutcome { identical: a == b, original, replayed })
}
