use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cjs_core::bpdn::{SolveReport, StopReason};
use cjs_core::phantom::gradient_sparsity;
use cjs_core::sensing::{mutual_coherence, ric_lower_bound, COHERENCE_BUDGET};
use cjs_core::{SchemeConfig, SensingOperator};
use cjs::experiment::{self, level_tag, ExperimentReport};
use cjs::{io, Error, ExperimentConfig, PhantomSpec, Result, SolverKind};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cjs", version, about = "Sparse gradient recovery from Born scattering data")]
struct Cli {
    /// Experiment configuration (JSON). Defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `cjs-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; rayon's default when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 3 when a solver stops without converging.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Reconstruct {
    /// Measurement header written by `measure`; without it the full
    /// pipeline runs from the configuration.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize the configured phantom.
    Phantom,
    /// Draw a sampling plan and check its invariants.
    Plan,
    /// Write plan and measurement sets for every noise level.
    Measure,
    ReconstructTv(Reconstruct),
    ReconstructOmp(Reconstruct),
    ReconstructL1(Reconstruct),
    /// Coherence, restricted isometry lower bound and plan invariants.
    Diagnose {
        /// Sparsity order of the isometry estimate.
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Random supports tried (every support when this exceeds their count).
        #[arg(long, default_value_t = 500)]
        trials: usize,
    },
    /// Noise sweep with slope fits, or an OMP spacing sweep with `--spacings`.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Grid sizes `q` for the spacing sweep (shape phantoms only).
        #[arg(long, value_delimiter = ',')]
        spacings: Option<Vec<usize>>,
        /// Noise size of the spacing sweep, in unscaled gradient units.
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Rerun a finished experiment and compare its metrics byte for byte.
    Replay { dir: PathBuf },
}

enum Outcome {
    Done,
    NotConverged,
    Mismatch,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if cfg.out.is_none() {
        cfg.out = Some(PathBuf::from("cjs-out"));
    }
    cfg.strict |= cli.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let d = cfg.out.clone().expect("set by load");
    std::fs::create_dir_all(&d).map_err(|e| Error::Config(format!("output directory {}: {e}", d.display())))?;
    Ok(d)
}

#[derive(Serialize)]
struct PhantomInfo<'a> {
    q: usize,
    spacing: f64,
    gradient_sparsity: usize,
    phantom: &'a PhantomSpec,
}

#[derive(Serialize)]
struct Diagnosis {
    n: usize,
    m: usize,
    coherence: Option<f64>,
    ric_order: usize,
    ric_lower_bound: f64,
    plan: cjs_core::sensing::PlanCheck,
    config: ExperimentConfig,
}

fn summarize(report: &ExperimentReport) {
    println!("n = {}, gradient sparsity = {}", report.n, report.gradient_sparsity);
    for r in &report.records {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
        println!(
            "{:?} level {}: {} rel_l2 {} rel_tv {} grad {} jaccard {}",
            r.solver,
            r.noise_level,
            r.status,
            show(r.rel_l2_object),
            show(r.rel_tv),
            show(r.gradient_rel_l22),
            show(r.support_jaccard)
        );
    }
}

fn converged(report: &ExperimentReport) -> bool {
    report.records.iter().all(|r| r.converged())
}

fn strict_outcome(cfg: &ExperimentConfig, ok: bool) -> Outcome {
    if cfg.strict && !ok {
        Outcome::NotConverged
    } else {
        Outcome::Done
    }
}

fn reconstruct_file(cfg: &ExperimentConfig, solver: SolverKind, path: &Path) -> Result<Outcome> {
    let set = io::read_measurements(path)?;
    let h = &set.header;
    let plan = io::plan_for(path, h)?;
    let scheme = SchemeConfig { scheme: h.scheme, n: h.n, omega: h.omega, spacing: h.spacing, gamma: h.gamma, mode: h.mode, seed: h.seed };
    let op = SensingOperator::new(&plan, h.q, &scheme)?;
    let dir = out_dir(cfg)?;
    let name = format!("{}_{}", solver_name(solver), level_tag(h.noise_level));
    let finish = |img: &cjs_core::Image, rep: &SolveReport| -> Result<bool> {
        io::write_image(&dir, &name, img)?;
        io::write_json(&dir.join(format!("{name}_report.json")), rep)?;
        println!("{name}: {} iterations, {:?}", rep.iterations, rep.stopping_reason);
        Ok(rep.stopping_reason != StopReason::MaxIter)
    };
    let ok = match solver {
        SolverKind::Tv => {
            let (img, rep) = experiment::reconstruct_tv(&op, &set.y, h.epsilon_object, &cfg.tv)?;
            finish(&img, &rep)?
        }
        SolverKind::L1 => {
            let (img, rep) = experiment::reconstruct_l1(&op, &set.y, h.epsilon_object, &cfg.l1)?;
            finish(&img, &rep)?
        }
        SolverKind::Omp => {
            let out = experiment::reconstruct_omp(&op, &set.by, h.epsilon_channel_sum, &cfg.omp)?;
            io::write_image(&dir, &name, &out.levels.image)?;
            io::write_json(&dir.join(format!("{name}_trace.json")), &out.trace)?;
            println!("{name}: support {} after {} steps, {:?}", out.support.len(), out.trace.iterations(), out.trace.stop);
            true
        }
    };
    Ok(strict_outcome(cfg, ok))
}

fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::Tv => "tv",
        SolverKind::Omp => "omp",
        SolverKind::L1 => "l1",
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Command::Replay { dir } = &cli.command {
        let r = experiment::replay(dir)?;
        println!("{} vs {}: {}", r.original.display(), r.replayed.display(), if r.identical { "identical" } else { "DIFFERENT" });
        return Ok(if r.identical { Outcome::Done } else { Outcome::Mismatch });
    }
    let cfg = load(cli)?;
    match &cli.command {
        Command::Phantom => {
            let dir = out_dir(&cfg)?;
            let img = cfg.phantom()?;
            io::write_image(&dir, "phantom", &img)?;
            let info = PhantomInfo { q: cfg.q, spacing: cfg.spacing(), gradient_sparsity: gradient_sparsity(&img), phantom: &cfg.phantom };
            io::write_json(&dir.join("phantom.json"), &info)?;
            println!("q = {}, gradient sparsity = {}", info.q, info.gradient_sparsity);
        }
        Command::Plan => {
            let dir = out_dir(&cfg)?;
            let prep = experiment::prepare(&cfg)?;
            io::write_plan(&dir.join("plan.json"), &prep.plan)?;
            let check = prep.plan.check_invariants(&prep.scheme);
            io::write_json(&dir.join("plan_check.json"), &check)?;
            println!("{} measurements, invariants {}", prep.plan.len(), if check.ok { "ok" } else { "VIOLATED" });
        }
        Command::Measure => {
            let dir = out_dir(&cfg)?;
            let prep = experiment::prepare(&cfg)?;
            io::write_plan(&dir.join("plan.json"), &prep.plan)?;
            io::write_image(&dir, "truth", &prep.image)?;
            for &level in &cfg.noise_levels {
                let (noisy, by, _) = experiment::noisy_data(&prep, &cfg, level)?;
                let tag = level_tag(level);
                let set = experiment::measurement_set(&prep, &cfg, level, &noisy, &by, "plan.json", &format!("data_{tag}.csv"));
                let path = dir.join(format!("measurements_{tag}.json"));
                io::write_measurements(&path, &set)?;
                println!("{}: eps_object {:.4e}, eps_gradient {:.4e}", path.display(), noisy.epsilon_object, noisy.epsilon_gradient);
            }
        }
        Command::ReconstructTv(r) | Command::ReconstructOmp(r) | Command::ReconstructL1(r) => {
            let solver = match &cli.command {
                Command::ReconstructTv(_) => SolverKind::Tv,
                Command::ReconstructOmp(_) => SolverKind::Omp,
                _ => SolverKind::L1,
            };
            if let Some(path) = &r.data {
                return reconstruct_file(&cfg, solver, path);
            }
            let cfg = ExperimentConfig { solvers: vec![solver], ..cfg };
            let report = experiment::run_experiment(&cfg)?;
            summarize(&report);
            return Ok(strict_outcome(&cfg, converged(&report)));
        }
        Command::Diagnose { order, trials } => {
            let dir = out_dir(&cfg)?;
            let prep = experiment::prepare(&cfg)?;
            let m = cfg.q * cfg.q;
            let coherence = if m <= COHERENCE_BUDGET { Some(mutual_coherence(&prep.op)?) } else { None };
            let d = Diagnosis {
                n: prep.plan.len(),
                m,
                coherence,
                ric_order: *order,
                ric_lower_bound: ric_lower_bound(&prep.op, *order, *trials, cfg.seed)?,
                plan: prep.plan.check_invariants(&prep.scheme),
                config: cfg.clone(),
            };
            io::write_json(&dir.join("diagnose.json"), &d)?;
            println!(
                "n = {}, m = {}, coherence {}, delta_{} >= {:.4}, plan invariants {}",
                d.n,
                d.m,
                d.coherence.map_or("skipped".to_string(), |c| format!("{c:.4}")),
                d.ric_order,
                d.ric_lower_bound,
                if d.plan.ok { "ok" } else { "VIOLATED" }
            );
        }
        Command::Sweep { levels, spacings, epsilon, seeds } => {
            let dir = out_dir(&cfg)?;
            if let Some(qs) = spacings {
                let PhantomSpec::Shapes { shapes } = &cfg.phantom else {
                    return Err(Error::Config("the spacing sweep needs a shapes phantom".into()));
                };
                let n_per = cfg.n_per_sparsity.round().max(1.0) as usize;
                let sweep = experiment::omp_spacing_sweep(shapes, qs, *epsilon, n_per, *seeds)?;
                io::write_json(&dir.join("spacing_sweep.json"), &sweep)?;
                for r in &sweep.rows {
                    println!("q {}: mean error {:.4e}, exact support {}/{}", r.q, r.mean_error, r.exact_support, r.seeds);
                }
                println!("slope vs spacing: {}", sweep.slope.map_or("-".to_string(), |s| format!("{s:.3}")));
            } else {
                let levels = levels.clone().unwrap_or_else(|| cfg.noise_levels.clone());
                let sweep = experiment::noise_sweep(&cfg, &levels)?;
                summarize(&sweep.report);
                for f in &sweep.fits {
                    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
                    println!("{:?}: gradient slope {}, object slope {}", f.solver, show(f.gradient_slope), show(f.object_slope));
                }
                return Ok(strict_outcome(&cfg, converged(&sweep.report)));
            }
        }
        Command::Replay { .. } => unreachable!(),
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::FAILURE,
        Ok(Outcome::NotConverged) => {
            eprintln!("error: a solver stopped without converging");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
