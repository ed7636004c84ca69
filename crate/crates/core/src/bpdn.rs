//! Basis pursuit denoising: TV-min over zero-border images and row-sparse
//! recovery of multi-vectors, plus the error-bound checker.
//!
//! TV-min solves `min TV(V)` subject to `||l^2 Phi V - y|| <= eps` with a
//! primal-dual (Chambolle-Pock) iteration on the image. Since the unknown
//! is the image itself, its gradient is curl-free by construction.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grad::{
    curl_residual, discrete_gradient, forward_differences_adjoint, tv_of_differences, unscaled_gradient, Image,
    TvMode,
};
use crate::linalg::conjugate_gradient;
use crate::math::{abs, norm2, norm_sqr, sqrt};
use crate::multivec::{Exponent, MultiVector};
use crate::sensing::{LinearMap, SensingOperator};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn default_max_iter() -> usize {
    5000
}

fn default_rel_tol() -> f64 {
    1e-6
}

fn default_power_iters() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvSolveConfig {
    #[serde(default)]
    pub mode: TvMode,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TvSolveConfig {
    fn default() -> Self {
        Self {
            mode: TvMode::Isotropic,
            epsilon: 0.0,
            max_iter: default_max_iter(),
            rel_tol: default_rel_tol(),
            power_iters: default_power_iters(),
            seed: 0,
        }
    }
}

impl TvSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidConfiguration("epsilon must be finite and nonnegative".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfiguration("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfiguration("rel_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tol,
    MaxIter,
    /// `eps >= ||y||`, so zero is feasible and returned.
    InfeasibleTrivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub stopping_reason: StopReason,
    pub objective: Vec<f64>,
    pub residual: Vec<f64>,
    pub epsilon: f64,
    pub final_objective: f64,
    pub final_residual: f64,
    /// `max(0, residual - eps) / max(eps, ||y||)`.
    pub feasibility_gap: f64,
    pub curl_residual: f64,
    /// Set by the caller; the core crate has no clock.
    pub wall_time_s: f64,
    pub operator_norm: f64,
    /// Weight of the data block relative to the gradient block.
    pub data_scale: f64,
    /// Whether the final iterate was pulled into the data ball by a
    /// least-squares correction.
    pub polished: bool,
    /// Lagrange parameter of the penalized subproblem, when one was used.
    pub lambda: Option<f64>,
    /// Relative change of the iterate at the last step.
    pub last_change: f64,
}

impl SolveReport {
    fn trivial(epsilon: f64, residual: f64) -> Self {
        Self {
            iterations: 0,
            stopping_reason: StopReason::InfeasibleTrivial,
            objective: Vec::new(),
            residual: Vec::new(),
            epsilon,
            final_objective: 0.0,
            final_residual: residual,
            feasibility_gap: 0.0,
            curl_residual: 0.0,
            wall_time_s: 0.0,
            operator_norm: 0.0,
            data_scale: 0.0,
            polished: false,
            lambda: None,
            last_change: 0.0,
        }
    }

    /// Residual within `eps (1 + 1e-3)` up to a `1e-9 ||y||` floor.
    pub fn is_feasible(&self, y_norm: f64) -> bool {
        self.final_residual <= self.epsilon * (1.0 + 1e-3) + 1e-9 * y_norm
    }
}

fn random_vector(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        })
        .collect()
}

/// Spectral norm of `A^* A` applied through `normal`, by power iteration
/// from a seeded random start. Returns `sqrt` of the top eigenvalue.
pub fn power_norm<F>(normal: F, dim: usize, iters: usize, seed: u64) -> f64
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let mut x = random_vector(dim, seed);
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        for z in x.iter_mut() {
            *z /= nx;
        }
        let y = normal(&x);
        lambda = crate::math::dot(&x, &y).re;
        x = y;
    }
    sqrt(lambda.max(0.0))
}

/// Operator norm `||A||` by power iteration.
pub fn operator_norm(op: &dyn LinearMap, iters: usize, seed: u64) -> f64 {
    power_norm(
        |x| {
            let mut y = vec![ZERO; op.rows()];
            op.apply_into(x, &mut y);
            let mut z = vec![ZERO; op.cols()];
            op.adjoint_into(&y, &mut z);
            z
        },
        op.cols(),
        iters,
        seed,
    )
}

/// `V -> scale * A (mask V)`.
struct MaskedMap<'a> {
    op: &'a dyn LinearMap,
    mask: &'a [bool],
    scale: f64,
}

impl LinearMap for MaskedMap<'_> {
    fn rows(&self) -> usize {
        self.op.rows()
    }

    fn cols(&self) -> usize {
        self.op.cols()
    }

    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let masked: Vec<C64> = x.iter().zip(self.mask).map(|(v, &k)| if k { v * self.scale } else { ZERO }).collect();
        self.op.apply_into(&masked, out);
    }

    fn adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        self.op.adjoint_into(y, out);
        for (o, &k) in out.iter_mut().zip(self.mask) {
            *o = if k { *o * self.scale } else { ZERO };
        }
    }
}

/// Projection of `w` onto the ball of radius `r` around `c`.
fn project_ball(w: &mut [C64], c: &[C64], r: f64) {
    let d: f64 = sqrt(w.iter().zip(c).map(|(a, b)| norm_sqr(a - b)).sum());
    if d > r {
        let t = if d > 0.0 { r / d } else { 0.0 };
        for (a, b) in w.iter_mut().zip(c) {
            *a = b + (*a - b) * t;
        }
    }
}

fn residual_norm(ax: &[C64], y: &[C64]) -> f64 {
    sqrt(ax.iter().zip(y).map(|(a, b)| norm_sqr(a - b)).sum())
}

/// Least-squares correction `delta` (minimum norm) with `A delta ~ t r`,
/// so that the residual `r - A delta` shrinks to `(1 - t) ||r||`.
fn polish(a: &dyn LinearMap, v: &mut [C64], y: &[C64], eps: f64) -> bool {
    let mut av = vec![ZERO; a.rows()];
    a.apply_into(v, &mut av);
    let r: Vec<C64> = y.iter().zip(&av).map(|(yi, ai)| yi - ai).collect();
    let rn = norm2(&r);
    if rn <= eps * (1.0 + 1e-3) {
        return false;
    }
    let t = 1.0 - eps * (1.0 - 1e-4) / rn;
    let target: Vec<C64> = r.iter().map(|z| z * t).collect();
    let mut rhs = vec![ZERO; a.cols()];
    a.adjoint_into(&target, &mut rhs);
    let delta = conjugate_gradient(
        |x, out| {
            let mut tmp = vec![ZERO; a.rows()];
            a.apply_into(x, &mut tmp);
            a.adjoint_into(&tmp, out);
        },
        &rhs,
        1e-14,
        10 * a.cols().min(a.rows()).max(50),
    );
    for (vi, di) in v.iter_mut().zip(&delta) {
        *vi += di;
    }
    true
}

/// TV-min for an operator of any representation acting on `q x q` images
/// with spacing `l`; the data model is `y = Phi (l^2 V)`.
pub fn solve_tvmin_with(
    op: &dyn LinearMap,
    q: usize,
    spacing: f64,
    y: &[C64],
    cfg: &TvSolveConfig,
) -> Result<(Image, SolveReport)> {
    solve_tvmin_observed(op, q, spacing, y, cfg, &mut |_, _| {})
}

/// As [`solve_tvmin_with`], handing every iterate to `observer` together
/// with its iteration number (starting at 1).
pub fn solve_tvmin_observed(
    op: &dyn LinearMap,
    q: usize,
    spacing: f64,
    y: &[C64],
    cfg: &TvSolveConfig,
    observer: &mut dyn FnMut(usize, &[C64]),
) -> Result<(Image, SolveReport)> {
    cfg.validate()?;
    let m = q * q;
    if op.cols() != m {
        return Err(Error::DimensionMismatch { expected: m, found: op.cols() });
    }
    if y.len() != op.rows() {
        return Err(Error::DimensionMismatch { expected: op.rows(), found: y.len() });
    }
    if y.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(invalid("data must be finite"));
    }
    let y_norm = norm2(y);
    let eps = cfg.epsilon;
    if eps >= y_norm {
        return Ok((Image::zeros(q, spacing)?, SolveReport::trivial(eps, y_norm)));
    }
    let mask = Image::interior_mask(q);
    let a = MaskedMap { op, mask: &mask, scale: spacing * spacing };
    let grad_normal = |x: &[C64]| {
        let masked: Vec<C64> = x.iter().zip(&mask).map(|(v, &k)| if k { *v } else { ZERO }).collect();
        let (g1, g2) = unscaled_gradient(&masked, q);
        let mut out = vec![ZERO; m];
        forward_differences_adjoint(&g1, &g2, q, &mut out);
        for (o, &k) in out.iter_mut().zip(&mask) {
            if !k {
                *o = ZERO;
            }
        }
        out
    };
    let grad_norm = power_norm(grad_normal, m, cfg.power_iters, cfg.seed);
    let a_norm = operator_norm(&a, cfg.power_iters, cfg.seed.wrapping_add(1));
    if a_norm == 0.0 {
        return Err(invalid("sensing operator vanishes on the interior"));
    }
    let c = grad_norm / a_norm;
    let k_norm = power_norm(
        |x| {
            let mut out = grad_normal(x);
            let mut ax = vec![ZERO; a.rows()];
            a.apply_into(x, &mut ax);
            let mut back = vec![ZERO; m];
            a.adjoint_into(&ax, &mut back);
            for (o, b) in out.iter_mut().zip(&back) {
                *o += b * (c * c);
            }
            out
        },
        m,
        cfg.power_iters,
        cfg.seed.wrapping_add(2),
    ) * 1.01;
    let sigma = 0.95 / k_norm;
    let tau = 0.95 / k_norm;
    let cy: Vec<C64> = y.iter().map(|z| z * c).collect();
    let radius = c * eps;

    let n = y.len();
    let mut v = vec![ZERO; m];
    let mut av = vec![ZERO; n];
    let mut v_bar = v.clone();
    let mut av_bar = av.clone();
    let mut u1 = vec![ZERO; m];
    let mut u2 = vec![ZERO; m];
    let mut w = vec![ZERO; n];
    let mut objective = Vec::new();
    let mut residual = Vec::new();
    let mut calm = 0;
    let mut reason = StopReason::MaxIter;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut back = vec![ZERO; m];
    let mut div = vec![ZERO; m];
    let mut av_new = vec![ZERO; n];
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        // dual step on the gradient block
        let (g1, g2) = unscaled_gradient(&v_bar, q);
        for j in 0..m {
            u1[j] += g1[j] * sigma;
            u2[j] += g2[j] * sigma;
            match cfg.mode {
                TvMode::Isotropic => {
                    let r = sqrt(norm_sqr(u1[j]) + norm_sqr(u2[j]));
                    if r > 1.0 {
                        u1[j] /= r;
                        u2[j] /= r;
                    }
                }
                TvMode::Anisotropic => {
                    for u in [&mut u1[j], &mut u2[j]] {
                        let r = abs(*u);
                        if r > 1.0 {
                            *u /= r;
                        }
                    }
                }
            }
        }
        // dual step on the data block: w - sigma * P_ball(w / sigma)
        for (wi, ai) in w.iter_mut().zip(&av_bar) {
            *wi += ai * (c * sigma);
        }
        let mut scaled: Vec<C64> = w.iter().map(|z| z / sigma).collect();
        project_ball(&mut scaled, &cy, radius);
        for (wi, si) in w.iter_mut().zip(&scaled) {
            *wi -= si * sigma;
        }
        // primal step
        forward_differences_adjoint(&u1, &u2, q, &mut div);
        a.adjoint_into(&w, &mut back);
        let mut diff_sq = 0.0;
        let mut new_sq = 0.0;
        for j in 0..m {
            let prev = v[j];
            let next = if mask[j] { prev - (div[j] + back[j] * c) * tau } else { ZERO };
            diff_sq += norm_sqr(next - prev);
            new_sq += norm_sqr(next);
            v_bar[j] = next * 2.0 - prev;
            v[j] = next;
        }
        a.apply_into(&v, &mut av_new);
        for i in 0..n {
            av_bar[i] = av_new[i] * 2.0 - av[i];
            av[i] = av_new[i];
        }
        let (d1, d2) = unscaled_gradient(&v, q);
        objective.push(tv_of_differences(&d1, &d2, cfg.mode));
        residual.push(residual_norm(&av, y));
        observer(iterations, &v);
        let change = sqrt(diff_sq) / sqrt(new_sq).max(f64::MIN_POSITIVE);
        last_change = change;
        if change < cfg.rel_tol {
            calm += 1;
            if calm >= 10 {
                reason = StopReason::Tol;
                break;
            }
        } else {
            calm = 0;
        }
    }
    let polished = polish(&a, &mut v, y, eps);
    a.apply_into(&v, &mut av);
    let final_residual = residual_norm(&av, y);
    let (d1, d2) = unscaled_gradient(&v, q);
    let final_objective = tv_of_differences(&d1, &d2, cfg.mode);
    let image = Image::from_values(q, spacing, v)?;
    let report = SolveReport {
        iterations,
        stopping_reason: reason,
        objective,
        residual,
        epsilon: eps,
        final_objective,
        final_residual,
        feasibility_gap: (final_residual - eps).max(0.0) / eps.max(y_norm),
        curl_residual: curl_residual(&discrete_gradient(&image)),
        wall_time_s: 0.0,
        operator_norm: k_norm,
        data_scale: c,
        polished,
        lambda: None,
        last_change,
    };
    Ok((image, report))
}

/// TV-min with a sensing operator, using its grid side and spacing.
pub fn solve_tvmin(op: &SensingOperator, y: &[C64], cfg: &TvSolveConfig) -> Result<(Image, SolveReport)> {
    solve_tvmin_with(op, op.side(), op.spacing(), y, cfg)
}

/// How entries are grouped by the sparsity norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// `||Z||_{1,2}`: rows shrink together.
    #[default]
    Rows,
    /// `||Z||_{1,1}`: every entry on its own (the concatenated form).
    Entries,
}

fn default_inner_iter() -> usize {
    20000
}

fn default_inner_tol() -> f64 {
    1e-10
}

fn default_residual_tol() -> f64 {
    0.01
}

fn default_max_outer() -> usize {
    80
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpdnConfig {
    #[serde(default)]
    pub grouping: Grouping,
    /// Iteration cap of each inner solve (and of the equality-constrained solve).
    #[serde(default = "default_inner_iter")]
    pub max_iter: usize,
    #[serde(default = "default_inner_tol")]
    pub rel_tol: f64,
    /// Accept once `| ||residual|| - eps | <= residual_tol * eps`.
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_power_iters")]
    pub power_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BpdnConfig {
    fn default() -> Self {
        Self {
            grouping: Grouping::Rows,
            max_iter: default_inner_iter(),
            rel_tol: default_inner_tol(),
            residual_tol: default_residual_tol(),
            max_outer: default_max_outer(),
            power_iters: default_power_iters(),
            seed: 0,
        }
    }
}

/// Group soft-thresholding: rows (or entries) shrink in norm by `t`.
pub fn shrink(z: &mut MultiVector, t: f64, grouping: Grouping) {
    match grouping {
        Grouping::Rows => {
            for i in 0..z.rows() {
                let r = z.row_norm(i);
                let f = if r > t { 1.0 - t / r } else { 0.0 };
                for e in z.row_mut(i) {
                    *e *= f;
                }
            }
        }
        Grouping::Entries => {
            for e in z.as_mut_slice() {
                let r = abs(*e);
                *e *= if r > t { 1.0 - t / r } else { 0.0 };
            }
        }
    }
}

fn sparsity_norm(z: &MultiVector, grouping: Grouping) -> f64 {
    match grouping {
        Grouping::Rows => z.norm(Exponent::One, Exponent::Two),
        Grouping::Entries => z.norm(Exponent::One, Exponent::One),
    }
}

/// Per-channel operators, one per column of the multi-vector.
pub(crate) struct Channels<'a> {
    pub(crate) ops: Vec<&'a dyn LinearMap>,
    pub(crate) n: usize,
    pub(crate) m: usize,
}

impl<'a> Channels<'a> {
    pub(crate) fn new(ops: &[&'a dyn LinearMap], d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("at least one channel is required"));
        }
        let ops: Vec<&dyn LinearMap> = match ops.len() {
            1 => vec![ops[0]; d],
            k if k == d => ops.to_vec(),
            k => return Err(Error::DimensionMismatch { expected: d, found: k }),
        };
        let (n, m) = (ops[0].rows(), ops[0].cols());
        if ops.iter().any(|o| o.rows() != n || o.cols() != m) {
            return Err(invalid("channel operators must share their shape"));
        }
        Ok(Self { ops, n, m })
    }

    pub(crate) fn forward(&self, z: &MultiVector) -> MultiVector {
        let cols: Vec<Vec<C64>> = self
            .ops
            .iter()
            .enumerate()
            .map(|(j, op)| {
                let mut out = vec![ZERO; self.n];
                op.apply_into(&z.column(j), &mut out);
                out
            })
            .collect();
        MultiVector::from_columns(&cols).expect("consistent shapes")
    }

    pub(crate) fn adjoint(&self, r: &MultiVector) -> MultiVector {
        let cols: Vec<Vec<C64>> = self
            .ops
            .iter()
            .enumerate()
            .map(|(j, op)| {
                let mut out = vec![ZERO; self.m];
                op.adjoint_into(&r.column(j), &mut out);
                out
            })
            .collect();
        MultiVector::from_columns(&cols).expect("consistent shapes")
    }

    fn norm(&self, iters: usize, seed: u64) -> f64 {
        self.ops
            .iter()
            .enumerate()
            .map(|(j, op)| operator_norm(*op, iters, seed.wrapping_add(j as u64)))
            .fold(0.0, f64::max)
    }
}

/// FISTA on `1/2 ||phi(Z) - Y||^2 + lambda ||Z||`, warm-started at `z`.
fn fista(ch: &Channels<'_>, by: &MultiVector, lambda: f64, lip: f64, z: &mut MultiVector, cfg: &BpdnConfig) -> (usize, f64) {
    let step = 1.0 / lip;
    let mut y = z.clone();
    let mut t = 1.0;
    let mut change = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let r = ch.forward(&y).sub(by).expect("shape");
        let g = ch.adjoint(&r);
        let mut next = y.sub(&g.scale(C64::new(step, 0.0))).expect("shape");
        shrink(&mut next, lambda * step, cfg.grouping);
        let t_next = (1.0 + sqrt(1.0 + 4.0 * t * t)) / 2.0;
        let delta = next.sub(z).expect("shape");
        change = delta.frobenius() / next.frobenius().max(f64::MIN_POSITIVE);
        let uphill = crate::math::dot(y.sub(&next).expect("shape").as_slice(), delta.as_slice()).re > 0.0;
        y = next.add(&delta.scale(C64::new((t - 1.0) / t_next, 0.0))).expect("shape");
        // restart momentum when the step points uphill
        if uphill {
            y = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        *z = next;
        if change < cfg.rel_tol {
            return (it + 1, change);
        }
    }
    (cfg.max_iter, change)
}

/// Equality-constrained `min ||Z||` s.t. `phi(Z) = Y` by a primal-dual iteration.
fn equality_constrained(ch: &Channels<'_>, by: &MultiVector, norm: f64, cfg: &BpdnConfig) -> (MultiVector, usize, bool, f64) {
    let d = by.cols();
    let step = 0.95 / (norm * 1.01);
    let y_norm = by.frobenius();
    let feas_tol = sqrt(cfg.rel_tol).max(1e-8);
    let mut z = MultiVector::zeros(ch.m, d);
    let mut z_bar = z.clone();
    let mut w = MultiVector::zeros(ch.n, d);
    let mut calm = 0;
    let mut change = f64::INFINITY;
    for it in 0..cfg.max_iter {
        let r = ch.forward(&z_bar).sub(by).expect("shape");
        let feasible = r.frobenius() <= feas_tol * y_norm;
        w = w.add(&r.scale(C64::new(step, 0.0))).expect("shape");
        let back = ch.adjoint(&w);
        let mut next = z.sub(&back.scale(C64::new(step, 0.0))).expect("shape");
        shrink(&mut next, step, cfg.grouping);
        let delta = next.sub(&z).expect("shape");
        change = delta.frobenius() / next.frobenius().max(f64::MIN_POSITIVE);
        z_bar = next.add(&delta).expect("shape");
        z = next;
        // a stalled but infeasible iterate (e.g. zero) is not converged
        if change < cfg.rel_tol && feasible {
            calm += 1;
            if calm >= 10 {
                return (z, it + 1, true, change);
            }
        } else {
            calm = 0;
        }
    }
    (z, cfg.max_iter, false, change)
}

/// Row-sparse basis pursuit denoising
/// `min ||Z||_{1,2}` s.t. `||Y - phi(Z)||_{2,2} <= eps`, with `phi(Z)_j = Phi_j Z_j`.
/// A single operator is shared by every channel.
pub fn solve_bpdn_rowsparse(
    ops: &[&dyn LinearMap],
    by: &MultiVector,
    epsilon: f64,
    cfg: &BpdnConfig,
) -> Result<(MultiVector, SolveReport)> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidConfiguration("epsilon must be finite and nonnegative".into()));
    }
    let ch = Channels::new(ops, by.cols())?;
    if by.rows() != ch.n {
        return Err(Error::DimensionMismatch { expected: ch.n, found: by.rows() });
    }
    let y_norm = by.frobenius();
    let d = by.cols();
    if epsilon >= y_norm {
        return Ok((MultiVector::zeros(ch.m, d), SolveReport::trivial(epsilon, y_norm)));
    }
    let norm = ch.norm(cfg.power_iters, cfg.seed);
    let finish = |z: MultiVector, iterations: usize, reason: StopReason, lambda: Option<f64>, last_change: f64, trace: (Vec<f64>, Vec<f64>)| {
        let res = ch.forward(&z).sub(by).expect("shape").frobenius();
        let obj = sparsity_norm(&z, cfg.grouping);
        let report = SolveReport {
            iterations,
            stopping_reason: reason,
            objective: trace.0,
            residual: trace.1,
            epsilon,
            final_objective: obj,
            final_residual: res,
            feasibility_gap: (res - epsilon).max(0.0) / epsilon.max(y_norm),
            curl_residual: 0.0,
            wall_time_s: 0.0,
            operator_norm: norm,
            data_scale: 1.0,
            polished: false,
            lambda,
            last_change,
        };
        (z, report)
    };
    if epsilon == 0.0 {
        // the problem is homogeneous; unit data keep the shrink step meaningful
        let unit = by.scale(C64::new(1.0 / y_norm, 0.0));
        let (z, iterations, converged, change) = equality_constrained(&ch, &unit, norm, cfg);
        let z = z.scale(C64::new(y_norm, 0.0));
        let reason = if converged { StopReason::Tol } else { StopReason::MaxIter };
        return Ok(finish(z, iterations, reason, None, change, (Vec::new(), Vec::new())));
    }
    let lip = norm * norm * 1.01;
    let corr = ch.adjoint(by);
    let lambda_max = match cfg.grouping {
        Grouping::Rows => corr.norm(Exponent::Inf, Exponent::Two),
        Grouping::Entries => corr.as_slice().iter().map(|z| abs(*z)).fold(0.0, f64::max),
    };
    let mut lo = lambda_max * 1e-12;
    let mut hi = lambda_max;
    let mut z = MultiVector::zeros(ch.m, d);
    let mut best: Option<(MultiVector, f64)> = None;
    let mut objective = Vec::new();
    let mut residual = Vec::new();
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut reason = StopReason::MaxIter;
    for _ in 0..cfg.max_outer {
        let lambda = sqrt(lo * hi);
        let (its, change) = fista(&ch, by, lambda, lip, &mut z, cfg);
        iterations += its;
        last_change = change;
        let res = ch.forward(&z).sub(by).expect("shape").frobenius();
        objective.push(sparsity_norm(&z, cfg.grouping));
        residual.push(res);
        if res <= epsilon {
            lo = lambda;
            best = Some((z.clone(), lambda));
            if res >= epsilon * (1.0 - cfg.residual_tol) {
                reason = StopReason::Tol;
                break;
            }
        } else {
            hi = lambda;
        }
    }
    let (z, lambda) = match best {
        Some((z, l)) => (z, l),
        None => (z, sqrt(lo * hi)),
    };
    Ok(finish(z, iterations, reason, Some(lambda), last_change, (objective, residual)))
}

/// Quantities of the basis-pursuit error bound
/// `||Xhat - X|| <= 2 (1 - rho)^{-1} (alpha eps + (1 + rho) e0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpBoundCheck {
    pub s: usize,
    pub epsilon: f64,
    pub delta2s: f64,
    pub alpha: f64,
    pub rho: f64,
    /// `s^{-1/2} ||X - X^(s)||_{1,2}`.
    pub e0: f64,
    pub bound: f64,
    pub error: f64,
    pub holds: bool,
    /// `delta2s < sqrt 2 - 1`.
    pub hypothesis_ok: bool,
}

impl BpBoundCheck {
    pub fn slack(&self) -> f64 {
        self.bound - self.error
    }
}

/// Evaluates the bound for an estimate `xhat` of `x`.
pub fn check_bp_bound(x: &MultiVector, xhat: &MultiVector, s: usize, epsilon: f64, delta2s: f64) -> Result<BpBoundCheck> {
    if s == 0 {
        return Err(invalid("sparsity must be positive"));
    }
    let error = xhat.sub(x)?.frobenius();
    let tail = x.sub(&x.best_s_row_approx(s)?)?.norm(Exponent::One, Exponent::Two);
    let e0 = tail / sqrt(s as f64);
    let alpha = 2.0 * sqrt(1.0 + delta2s) / (1.0 - delta2s);
    let rho = core::f64::consts::SQRT_2 * delta2s / (1.0 - delta2s);
    let hypothesis_ok = (0.0..core::f64::consts::SQRT_2 - 1.0).contains(&delta2s);
    let bound = if rho < 1.0 && delta2s < 1.0 {
        2.0 / (1.0 - rho) * (alpha * epsilon + (1.0 + rho) * e0)
    } else {
        f64::INFINITY
    };
    Ok(BpBoundCheck { s, epsilon, delta2s, alpha, rho, e0, bound, error, holds: error <= bound, hypothesis_ok })
}

/// `m^{1/d} / (2 sqrt d)` with `d = 2`: the factor turning a gradient
/// 2-norm bound into an object 2-norm bound for zero-border images.
pub fn poincare_factor(m: usize) -> f64 {
    sqrt(m as f64) / (2.0 * core::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{SamplingMode, SamplingPlan, Scheme, SchemeConfig};

    #[test]
    fn group_shrink_matches_closed_form() {
        let mut z = MultiVector::from_real_rows(&[vec![3.0, 4.0], vec![0.3, 0.4], vec![0.0, 0.0]]).unwrap();
        shrink(&mut z, 1.0, Grouping::Rows);
        assert!((z.row_norm(0) - 4.0).abs() < 1e-15);
        assert!((z.get(0, 0).re - 2.4).abs() < 1e-15);
        assert_eq!(z.row_norm(1), 0.0);
        assert_eq!(z.row_norm(2), 0.0);
    }

    #[test]
    fn bound_arithmetic() {
        let x = MultiVector::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let b = check_bp_bound(&x, &x, 1, 1.0, 0.2).unwrap();
        assert!((b.bound - 8.472_819_712).abs() < 1e-6);
        assert_eq!(b.e0, 0.0);
        assert!(b.holds && b.hypothesis_ok);
        assert!((b.slack() - b.bound).abs() < 1e-15);
        let bad = check_bp_bound(&x, &x, 1, 1.0, 0.5).unwrap();
        assert!(!bad.hypothesis_ok);
    }

    #[test]
    fn trivial_when_epsilon_covers_data() {
        let cfg = SchemeConfig::new(Scheme::Backward, SamplingMode::Continuous, 10, 0.25, 0);
        let plan = SamplingPlan::draw(&cfg, 4).unwrap();
        let op = SensingOperator::new(&plan, 4, &cfg).unwrap();
        let y = vec![C64::new(1.0, 0.0); 10];
        let tv = TvSolveConfig { epsilon: 10.0, ..Default::default() };
        let (img, rep) = solve_tvmin(&op, &y, &tv).unwrap();
        assert_eq!(rep.stopping_reason, StopReason::InfeasibleTrivial);
        assert!(img.values().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn complete_data_is_inverted() {
        let q = 6;
        let cfg = SchemeConfig::new(Scheme::Backward, SamplingMode::Complete, q * q, 1.0 / q as f64, 0);
        let plan = SamplingPlan::draw(&cfg, q).unwrap();
        let op = SensingOperator::new(&plan, q, &cfg).unwrap();
        let mut v = Image::zeros(q, cfg.spacing).unwrap();
        v.set(2, 2, C64::new(1.0, 0.0));
        v.set(2, 3, C64::new(1.0, 0.0));
        v.set(3, 3, C64::new(-0.5, 0.5));
        let y = crate::measure::forward_measure(&v, &op).unwrap();
        let (est, rep) = solve_tvmin(&op, &y, &TvSolveConfig::default()).unwrap();
        assert!(crate::metrics::rel_l2(&v, &est).unwrap() <= 1e-6, "{rep:?}");
    }

    fn gaussian(n: usize, m: usize, seed: u64) -> crate::linalg::CMatrix {
        let v = random_vector(n * m, seed);
        let s = 1.0 / sqrt(2.0 * n as f64);
        crate::linalg::CMatrix::from_row_major(n, m, v.iter().map(|z| z * s).collect())
    }

    #[test]
    fn row_sparse_recovery_exact_and_noisy() {
        let a = gaussian(40, 80, 11);
        let x = crate::phantom::row_sparse(80, 2, 4, (1.0, 2.0), 5).unwrap();
        let ops: [&dyn LinearMap; 1] = [&a];
        let cols: Vec<Vec<C64>> = (0..2).map(|j| a.mul_vec(&x.column(j))).collect();
        let by = MultiVector::from_columns(&cols).unwrap();
        let (z, rep) = solve_bpdn_rowsparse(&ops, &by, 0.0, &BpdnConfig::default()).unwrap();
        assert_eq!(rep.stopping_reason, StopReason::Tol);
        assert!(z.sub(&x).unwrap().frobenius() < 1e-5 * x.frobenius(), "{}", rep.final_residual);

        let eps = 0.05 * by.frobenius();
        let (z, rep) = solve_bpdn_rowsparse(&ops, &by, eps, &BpdnConfig::default()).unwrap();
        assert_eq!(rep.stopping_reason, StopReason::Tol);
        assert!(rep.final_residual <= eps && rep.final_residual >= 0.99 * eps);
        assert_eq!(z.row_support(1e-9), x.row_support(0.0));
    }
}
