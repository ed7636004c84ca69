//! Orthogonal matching pursuit for joint sparsity, its recovery condition
//! and error bounds, the curl-constrained refit, and level-set
//! reconstruction of the object from a recovered gradient.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::bpdn::Channels;
use crate::error::{invalid, Error, Result};
use crate::grad::{cut_components, integrate_gradient, integrate_least_squares, Anchor, GradientField, Image};
use crate::linalg::{lstsq, null_space, singular_values, CMatrix, IncrementalQr};
use crate::math::{abs, norm2, sqrt};
use crate::multivec::{MultiVector, SupportSet};
use crate::sensing::LinearMap;
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OmpConfig {
    /// Stop once `sum_j ||R_j||_2 <= epsilon`.
    #[serde(default)]
    pub epsilon: f64,
    /// Iteration cap; `None` means the number of unknown rows.
    #[serde(default)]
    pub max_support: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmpStop {
    Epsilon,
    MaxSupport,
    /// The best correlation sits on the current support, so the residual
    /// is numerically orthogonal to every remaining column as well.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpTrace {
    pub selected: Vec<usize>,
    /// Largest summed correlation at each selection.
    pub corr_max: Vec<f64>,
    /// `sum_j ||R_j||_2`, starting with the data.
    pub residual_sum: Vec<f64>,
    /// `||R||_{2,2}`, starting with the data.
    pub residual_fro: Vec<f64>,
    /// Largest summed correlation on the support after each update.
    pub on_support_corr: Vec<f64>,
    pub rank_deficient: bool,
    pub stop: OmpStop,
}

impl OmpTrace {
    pub fn iterations(&self) -> usize {
        self.selected.len()
    }
}

fn residual_sums(r: &MultiVector) -> (f64, f64) {
    let sum = (0..r.cols()).map(|j| norm2(&r.column(j))).sum();
    (sum, r.frobenius())
}

/// Summed correlations `sum_j |(Phi_j^* R_j)_i|` for every `i`.
fn correlations(ch: &Channels<'_>, r: &MultiVector) -> Vec<f64> {
    let c = ch.adjoint(r);
    (0..c.rows()).map(|i| c.row(i).iter().map(|z| abs(*z)).sum()).collect()
}

/// Joint-sparsity OMP. `ops` holds one operator per column of `by`, or a
/// single operator shared by all columns. The least squares decouple over
/// the columns; the curl constraint is not imposed here.
pub fn omp_cjs(ops: &[&dyn LinearMap], by: &MultiVector, cfg: &OmpConfig) -> Result<(SupportSet, MultiVector, OmpTrace)> {
    if !(cfg.epsilon.is_finite() && cfg.epsilon >= 0.0) {
        return Err(Error::InvalidConfiguration("epsilon must be finite and nonnegative".into()));
    }
    let ch = Channels::new(ops, by.cols())?;
    if by.rows() != ch.n {
        return Err(Error::DimensionMismatch { expected: ch.n, found: by.rows() });
    }
    let d = by.cols();
    let cap = cfg.max_support.unwrap_or(ch.m).min(ch.m);
    let mut qrs: Vec<IncrementalQr> = (0..d).map(|_| IncrementalQr::new()).collect();
    let mut support: Vec<usize> = Vec::new();
    let mut coeffs: Vec<Vec<C64>> = vec![Vec::new(); d];
    let mut r = by.clone();
    let (sum0, fro0) = residual_sums(&r);
    let mut trace = OmpTrace {
        selected: Vec::new(),
        corr_max: Vec::new(),
        residual_sum: vec![sum0],
        residual_fro: vec![fro0],
        on_support_corr: Vec::new(),
        rank_deficient: false,
        stop: OmpStop::Epsilon,
    };
    let mut current = sum0;
    loop {
        if current <= cfg.epsilon {
            trace.stop = OmpStop::Epsilon;
            break;
        }
        if support.len() >= cap {
            trace.stop = OmpStop::MaxSupport;
            break;
        }
        let corr = correlations(&ch, &r);
        let mut best = 0;
        for (i, c) in corr.iter().enumerate() {
            if *c > corr[best] {
                best = i;
            }
        }
        if support.contains(&best) {
            trace.stop = OmpStop::Stalled;
            break;
        }
        support.push(best);
        trace.selected.push(best);
        trace.corr_max.push(corr[best]);
        for (j, qr) in qrs.iter_mut().enumerate() {
            if !qr.push(&ch.ops[j].column(best)) {
                trace.rank_deficient = true;
            }
        }
        for j in 0..d {
            let y = by.column(j);
            let (x, resid) = if trace.rank_deficient {
                let a = CMatrix::from_columns(ch.n, &support.iter().map(|&i| ch.ops[j].column(i)).collect::<Vec<_>>());
                let (x, _) = lstsq(&a, &y);
                let fit = a.mul_vec(&x);
                (x, y.iter().zip(&fit).map(|(a, b)| a - b).collect())
            } else {
                qrs[j].solve(&y)
            };
            coeffs[j] = x;
            r.set_column(j, &resid);
        }
        let (sum, fro) = residual_sums(&r);
        trace.residual_sum.push(sum);
        trace.residual_fro.push(fro);
        let after = correlations(&ch, &r);
        trace.on_support_corr.push(support.iter().map(|&i| after[i]).fold(0.0, f64::max));
        current = sum;
    }
    let mut x = MultiVector::zeros(ch.m, d);
    for (j, cj) in coeffs.iter().enumerate() {
        for (k, &i) in support.iter().enumerate() {
            if let Some(v) = cj.get(k) {
                x.set(i, j, *v);
            }
        }
    }
    Ok((SupportSet::new(support, ch.m)?, x, trace))
}

/// Quantities of the greedy recovery condition
/// `s < (1 + 1/mu) / 2 - sqrt(d) eps / (mu X_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpCondition {
    pub s: usize,
    pub mu_max: f64,
    pub epsilon: f64,
    pub d: usize,
    /// Smallest row 1-norm over the support of `X`.
    pub x_min: f64,
    pub threshold: f64,
    pub holds: bool,
    /// `mu_max = 0`: orthonormal columns, the condition holds outright.
    pub trivially_true: bool,
}

pub fn check_omp_condition(s: usize, mu_max: f64, epsilon: f64, x: &MultiVector, d: usize) -> Result<OmpCondition> {
    if !(0.0..=1.0 + 1e-12).contains(&mu_max) {
        return Err(invalid("coherence must lie in [0, 1]"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(invalid("epsilon must be finite and nonnegative"));
    }
    let support = x.row_support(0.0);
    let x_min = support
        .indices()
        .iter()
        .map(|&i| x.row(i).iter().map(|z| abs(*z)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if mu_max == 0.0 {
        return Ok(OmpCondition {
            s,
            mu_max,
            epsilon,
            d,
            x_min,
            threshold: f64::INFINITY,
            holds: true,
            trivially_true: true,
        });
    }
    let noise_term = if epsilon == 0.0 { 0.0 } else { sqrt(d as f64) * epsilon / (mu_max * x_min) };
    let threshold = (1.0 + 1.0 / mu_max) / 2.0 - noise_term;
    Ok(OmpCondition { s, mu_max, epsilon, d, x_min, threshold, holds: (s as f64) < threshold, trivially_true: false })
}

/// `2 eps / sqrt(1 - mu (s - 1))`.
pub fn omp_error_bound(epsilon: f64, mu_max: f64, s: usize) -> Result<f64> {
    let gap = 1.0 - mu_max * s.saturating_sub(1) as f64;
    if gap <= 0.0 {
        return Err(Error::HypothesisViolated("mu_max (s - 1) must be below 1".into()));
    }
    Ok(2.0 * epsilon / sqrt(gap))
}

/// `sqrt 2 eps / lambda_min`.
pub fn omp_error_bound_sharp(epsilon: f64, lambda_min: f64) -> Result<f64> {
    if lambda_min <= 0.0 {
        return Err(Error::DivisionByZero("support submatrix is singular".into()));
    }
    Ok(core::f64::consts::SQRT_2 * epsilon / lambda_min)
}

/// Smallest singular value of `Phi_{j,S}` over all channels.
pub fn support_lambda_min(ops: &[&dyn LinearMap], support: &SupportSet) -> f64 {
    ops.iter()
        .map(|op| {
            if support.is_empty() {
                return f64::INFINITY;
            }
            let cols: Vec<Vec<C64>> = support.indices().iter().map(|&i| op.column(i)).collect();
            let sv = singular_values(&CMatrix::from_columns(op.rows(), &cols));
            if sv.len() < support.len() {
                0.0
            } else {
                sv.last().copied().unwrap_or(0.0)
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Curl stencil rows `(D1 B2 - D2 B1)(p) = 0` touching the support, over
/// the unknowns `[B1 on S, B2 on S]`.
fn curl_constraints(support: &SupportSet, q: usize) -> CMatrix {
    let k = support.len();
    let pos = |j: usize| support.indices().binary_search(&j).ok();
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for p in 0..q * q {
        let (a, b) = (p / q, p % q);
        let down = if a + 1 < q { pos(p + q) } else { None };
        let right = if b + 1 < q { pos(p + 1) } else { None };
        let here = pos(p);
        if down.is_none() && right.is_none() && here.is_none() {
            continue;
        }
        let mut row = vec![ZERO; 2 * k];
        let one = C64::new(1.0, 0.0);
        if let Some(t) = down {
            row[k + t] += one;
        }
        if let Some(t) = here {
            row[k + t] -= one;
            row[t] += one;
        }
        if let Some(t) = right {
            row[t] -= one;
        }
        rows.push(row);
    }
    let data: Vec<C64> = rows.iter().flatten().copied().collect();
    CMatrix::from_row_major(rows.len(), 2 * k, data)
}

/// Result of the constrained refit.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub x: MultiVector,
    /// `||bY - phi(B)||_{2,2}`.
    pub residual: f64,
    /// The reduced least-squares system lost rank.
    pub singular: bool,
}

/// `min ||bY - phi(B)||_{2,2}` over `B` supported in `S` with a vanishing
/// curl, for a two-channel field on a `q x q` grid. The constraint is
/// eliminated with an orthonormal null-space basis.
pub fn constrained_ls_refit(ops: &[&dyn LinearMap], by: &MultiVector, support: &SupportSet) -> Result<Refit> {
    if by.cols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: by.cols() });
    }
    let ch = Channels::new(ops, 2)?;
    if by.rows() != ch.n {
        return Err(Error::DimensionMismatch { expected: ch.n, found: by.rows() });
    }
    let q = (sqrt(ch.m as f64) + 0.5) as usize;
    if q * q != ch.m {
        return Err(invalid("operators must act on a square grid"));
    }
    if support.indices().iter().any(|&i| i >= ch.m) {
        return Err(invalid("support index out of range"));
    }
    let k = support.len();
    let n = ch.n;
    if k == 0 {
        return Ok(Refit { x: MultiVector::zeros(ch.m, 2), residual: by.frobenius(), singular: false });
    }
    let basis = null_space(&curl_constraints(support, q));
    let mut x = MultiVector::zeros(ch.m, 2);
    let mut singular = false;
    if !basis.is_empty() {
        // M = blockdiag(Phi_1,S, Phi_2,S) N
        let cols: [Vec<Vec<C64>>; 2] =
            [0, 1].map(|j| support.indices().iter().map(|&i| ch.ops[j].column(i)).collect());
        let mut m_cols = Vec::with_capacity(basis.len());
        for nb in &basis {
            let mut col = vec![ZERO; 2 * n];
            for j in 0..2 {
                for t in 0..k {
                    let w = nb[j * k + t];
                    if w != ZERO {
                        for (o, c) in col[j * n..(j + 1) * n].iter_mut().zip(&cols[j][t]) {
                            *o += c * w;
                        }
                    }
                }
            }
            m_cols.push(col);
        }
        let a = CMatrix::from_columns(2 * n, &m_cols);
        let rhs: Vec<C64> = by.column(0).into_iter().chain(by.column(1)).collect();
        let (z, rank) = lstsq(&a, &rhs);
        singular = rank < basis.len();
        for (t, &i) in support.indices().iter().enumerate() {
            for j in 0..2 {
                let v: C64 = basis.iter().zip(&z).map(|(nb, zc)| nb[j * k + t] * zc).sum();
                x.set(i, j, v);
            }
        }
    }
    let residual = ch.forward(&x).sub(by)?.frobenius();
    Ok(Refit { x, residual, singular })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSets {
    /// Component means painted back onto their pixels.
    pub image: Image,
    /// One value per connected component, in label order.
    pub levels: Vec<C64>,
    pub labels: Vec<usize>,
    /// The field was not integrable and the least-squares potential was used.
    pub least_squares_fallback: bool,
}

/// Integrates a recovered gradient and flattens it on the connected
/// components left after cutting every edge with `|X| > edge_tol`.
pub fn level_set_reconstruct(field: &GradientField, anchor: Anchor, edge_tol: f64) -> Result<LevelSets> {
    let (potential, fallback) = match integrate_gradient(field, anchor) {
        Ok(img) => (img, false),
        Err(Error::InconsistentField { .. }) => (integrate_least_squares(field, anchor)?, true),
        Err(e) => return Err(e),
    };
    let (labels, count) = cut_components(field, edge_tol);
    let mut sums = vec![ZERO; count];
    let mut sizes = vec![0usize; count];
    for (v, &l) in potential.values().iter().zip(&labels) {
        sums[l] += v;
        sizes[l] += 1;
    }
    let levels: Vec<C64> = sums.iter().zip(&sizes).map(|(s, &c)| s / c as f64).collect();
    let values = labels.iter().map(|&l| levels[l]).collect();
    let image = Image::from_values(field.side(), field.spacing(), values)?;
    Ok(LevelSets { image, levels, labels, least_squares_fallback: fallback })
}
