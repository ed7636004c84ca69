//! Small dense complex linear algebra: Householder QR with column pivoting,
//! minimum-norm least squares, null spaces, Hermitian eigenvalues, and a
//! matrix-free conjugate gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, norm2, norm_sqr, sqrt};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<C64>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn adjoint_mul_vec(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![ZERO; self.cols];
        for i in 0..self.rows {
            let yi = y[i];
            for (o, a) in out.iter_mut().zip(&self.data[i * self.cols..(i + 1) * self.cols]) {
                *o += a.conj() * yi;
            }
        }
        out
    }

    /// Columns listed in `idx`, in that order.
    pub fn select_columns(&self, idx: &[usize]) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, idx.len());
        for i in 0..self.rows {
            for (k, &j) in idx.iter().enumerate() {
                out[(i, k)] = self[(i, j)];
            }
        }
        out
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Householder QR with column pivoting, `A P = Q R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    rows: usize,
    cols: usize,
    /// Unit Householder vectors; `reflectors[k]` acts on rows `k..`.
    reflectors: Vec<Vec<C64>>,
    /// Upper trapezoidal `R`, row-major `min(rows, cols) x cols`.
    r: CMatrix,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    /// Factorizes `a`. Columns whose remaining norm falls below
    /// `rcond * |R_00|` are treated as dependent.
    pub fn new(a: &CMatrix, rcond: f64) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        let mut reflectors = Vec::with_capacity(steps);
        let mut col_norms: Vec<f64> = (0..n).map(|j| (0..m).map(|i| norm_sqr(w[(i, j)])).sum()).collect();
        let mut rank = 0;
        let mut first = 0.0;
        for k in 0..steps {
            // recompute remaining norms to avoid downdating drift
            for (j, cn) in col_norms.iter_mut().enumerate().skip(k) {
                *cn = (k..m).map(|i| norm_sqr(w[(i, j)])).sum();
            }
            let (piv, &best) = col_norms
                .iter()
                .enumerate()
                .skip(k)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty range");
            if piv != k {
                for i in 0..m {
                    let t = w[(i, k)];
                    w[(i, k)] = w[(i, piv)];
                    w[(i, piv)] = t;
                }
                perm.swap(k, piv);
                col_norms.swap(k, piv);
            }
            let norm = sqrt(best);
            if k == 0 {
                first = norm;
            }
            if norm > rcond * first && norm > 0.0 {
                rank += 1;
            }
            let x0 = w[(k, k)];
            let phase = if abs(x0) > 0.0 { x0 / abs(x0) } else { C64::new(1.0, 0.0) };
            let alpha = -phase * norm;
            let mut v: Vec<C64> = (k..m).map(|i| w[(i, k)]).collect();
            v[0] -= alpha;
            let vn = norm2(&v);
            if vn > 0.0 {
                for z in v.iter_mut() {
                    *z /= vn;
                }
                for j in k..n {
                    let s: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * w[(k + t, j)]).sum();
                    for (t, vi) in v.iter().enumerate() {
                        w[(k + t, j)] -= vi * s * 2.0;
                    }
                }
            }
            reflectors.push(v);
        }
        let mut r = CMatrix::zeros(steps, n);
        for i in 0..steps {
            for j in i..n {
                r[(i, j)] = w[(i, j)];
            }
        }
        Self { rows: m, cols: n, reflectors, r, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `Q^* b`.
    pub fn apply_qh(&self, b: &mut [C64]) {
        for (k, v) in self.reflectors.iter().enumerate() {
            let s: C64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi.conj() * bi).sum();
            for (vi, bi) in v.iter().zip(&mut b[k..]) {
                *bi -= vi * s * 2.0;
            }
        }
    }

    /// `Q b`.
    pub fn apply_q(&self, b: &mut [C64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let s: C64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi.conj() * bi).sum();
            for (vi, bi) in v.iter().zip(&mut b[k..]) {
                *bi -= vi * s * 2.0;
            }
        }
    }

    /// Columns `from..rows` of the full `Q`.
    pub fn trailing_q_columns(&self, from: usize) -> Vec<Vec<C64>> {
        (from..self.rows)
            .map(|j| {
                let mut e = vec![ZERO; self.rows];
                e[j] = C64::new(1.0, 0.0);
                self.apply_q(&mut e);
                e
            })
            .collect()
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`.
    pub fn solve_min_norm(&self, b: &[C64]) -> Vec<C64> {
        assert_eq!(b.len(), self.rows);
        let r = self.rank;
        let mut x = vec![ZERO; self.cols];
        if r == 0 {
            return x;
        }
        let mut c = b.to_vec();
        self.apply_qh(&mut c);
        let w = if r == self.cols {
            back_substitute(&self.r, &c[..r])
        } else {
            // [R11 R12] = (M)^* with M = Q2 R2, so [R11 R12] = R2^* Q2^*
            let mut m = CMatrix::zeros(self.cols, r);
            for i in 0..r {
                for j in 0..self.cols {
                    m[(j, i)] = self.r[(i, j)].conj();
                }
            }
            let qr2 = PivotlessQr::new(&m);
            // R2^* u = c, forward substitution
            let mut u = vec![ZERO; r];
            for i in 0..r {
                let mut s = c[i];
                for t in 0..i {
                    s -= qr2.r[(t, i)].conj() * u[t];
                }
                u[i] = s / qr2.r[(i, i)].conj();
            }
            let mut w = vec![ZERO; self.cols];
            w[..r].copy_from_slice(&u);
            qr2.apply_q(&mut w);
            w
        };
        for (k, &j) in self.perm.iter().enumerate() {
            x[j] = w[k];
        }
        x
    }
}

/// Solves `R[..k, ..k] x = c` for upper triangular `R`.
fn back_substitute(r: &CMatrix, c: &[C64]) -> Vec<C64> {
    let k = c.len();
    let mut x = vec![ZERO; k];
    for i in (0..k).rev() {
        let mut s = c[i];
        for j in i + 1..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

struct PivotlessQr {
    reflectors: Vec<Vec<C64>>,
    r: CMatrix,
}

impl PivotlessQr {
    fn new(a: &CMatrix) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut w = a.clone();
        let steps = m.min(n);
        let mut reflectors = Vec::with_capacity(steps);
        for k in 0..steps {
            let norm = sqrt((k..m).map(|i| norm_sqr(w[(i, k)])).sum());
            let x0 = w[(k, k)];
            let phase = if abs(x0) > 0.0 { x0 / abs(x0) } else { C64::new(1.0, 0.0) };
            let alpha = -phase * norm;
            let mut v: Vec<C64> = (k..m).map(|i| w[(i, k)]).collect();
            v[0] -= alpha;
            let vn = norm2(&v);
            if vn > 0.0 {
                for z in v.iter_mut() {
                    *z /= vn;
                }
                for j in k..n {
                    let s: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * w[(k + t, j)]).sum();
                    for (t, vi) in v.iter().enumerate() {
                        w[(k + t, j)] -= vi * s * 2.0;
                    }
                }
            }
            reflectors.push(v);
        }
        let mut r = CMatrix::zeros(steps, n);
        for i in 0..steps {
            for j in i..n {
                r[(i, j)] = w[(i, j)];
            }
        }
        Self { reflectors, r }
    }

    fn apply_q(&self, b: &mut [C64]) {
        for (k, v) in self.reflectors.iter().enumerate().rev() {
            let s: C64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi.conj() * bi).sum();
            for (vi, bi) in v.iter().zip(&mut b[k..]) {
                *bi -= vi * s * 2.0;
            }
        }
    }
}

/// Default relative rank threshold.
pub const RCOND: f64 = 1e-10;

/// Minimum-norm least squares `argmin ||A x - b||`, with the numerical rank.
pub fn lstsq(a: &CMatrix, b: &[C64]) -> (Vec<C64>, usize) {
    let qr = PivotedQr::new(a, RCOND);
    (qr.solve_min_norm(b), qr.rank())
}

/// Orthonormal basis of `{x : C x = 0}` as columns.
pub fn null_space(c: &CMatrix) -> Vec<Vec<C64>> {
    if c.rows == 0 {
        return (0..c.cols)
            .map(|j| {
                let mut e = vec![ZERO; c.cols];
                e[j] = C64::new(1.0, 0.0);
                e
            })
            .collect();
    }
    let qr = PivotedQr::new(&c.adjoint(), RCOND);
    qr.trailing_q_columns(qr.rank())
}

/// Eigenvalues (ascending) of a Hermitian matrix. Uses cyclic Jacobi on the
/// real symmetric embedding `[[Re, -Im], [Im, Re]]`, whose spectrum repeats
/// each eigenvalue twice.
pub fn hermitian_eigenvalues(h: &CMatrix) -> Vec<f64> {
    let n = h.rows;
    assert_eq!(n, h.cols);
    let dim = 2 * n;
    let mut a = vec![0.0; dim * dim];
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            a[i * dim + j] = z.re;
            a[(i + n) * dim + (j + n)] = z.re;
            a[(i + n) * dim + j] = z.im;
            a[i * dim + (j + n)] = -z.im;
        }
    }
    let mut eig = symmetric_eigenvalues(&mut a, dim);
    eig.sort_by(f64::total_cmp);
    eig.into_iter().step_by(2).collect()
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix (destroys `a`).
pub fn symmetric_eigenvalues(a: &mut [f64], n: usize) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j] * a[i * n + j]).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Singular values (descending) of `a` via the eigenvalues of `A^* A`.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let gram = a.adjoint().matmul(a);
    let mut s: Vec<f64> = hermitian_eigenvalues(&gram).into_iter().map(|e| sqrt(e.max(0.0))).collect();
    s.reverse();
    s
}

/// Conjugate gradients for a Hermitian positive (semi)definite operator.
/// Stops when `||r|| <= tol * ||b||` or after `max_iter` steps.
pub fn conjugate_gradient<F>(apply: F, b: &[C64], tol: f64, max_iter: usize) -> Vec<C64>
where
    F: Fn(&[C64], &mut [C64]),
{
    let n = b.len();
    let mut x = vec![ZERO; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![ZERO; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return x;
    }
    let mut rs: f64 = r.iter().map(|z| norm_sqr(*z)).sum();
    for _ in 0..max_iter {
        if sqrt(rs) <= tol * b_norm {
            break;
        }
        apply(&p, &mut ap);
        let pap = crate::math::dot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rs_new: f64 = r.iter().map(|z| norm_sqr(*z)).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rs = rs_new;
    }
    x
}

/// Incrementally grown orthonormal basis for a least-squares fit on a
/// growing set of columns (modified Gram-Schmidt with one
/// re-orthogonalization pass).
#[derive(Debug, Clone, Default)]
pub struct IncrementalQr {
    q: Vec<Vec<C64>>,
    /// Column `k` of the upper-triangular factor, length `k + 1`.
    r: Vec<Vec<C64>>,
    dependent: bool,
}

impl IncrementalQr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a column. Returns `false` when it is numerically dependent on
    /// the existing ones (the factor is then marked rank deficient).
    pub fn push(&mut self, column: &[C64]) -> bool {
        let mut v = column.to_vec();
        let mut coeffs = vec![ZERO; self.q.len() + 1];
        for _pass in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let s = crate::math::dot(qk, &v);
                coeffs[k] += s;
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= qi * s;
                }
            }
        }
        let norm = norm2(&v);
        if norm <= 1e-10 * norm2(column).max(f64::MIN_POSITIVE) {
            self.dependent = true;
            return false;
        }
        for z in v.iter_mut() {
            *z /= norm;
        }
        coeffs[self.q.len()] = C64::new(norm, 0.0);
        self.q.push(v);
        self.r.push(coeffs);
        true
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.dependent
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Coefficients of the least-squares fit of `y` and the residual.
    pub fn solve(&self, y: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let k = self.q.len();
        let c: Vec<C64> = self.q.iter().map(|qk| crate::math::dot(qk, y)).collect();
        let mut resid = y.to_vec();
        for (qk, ck) in self.q.iter().zip(&c) {
            for (ri, qi) in resid.iter_mut().zip(qk) {
                *ri -= qi * ck;
            }
        }
        let mut x = vec![ZERO; k];
        for i in (0..k).rev() {
            let mut s = c[i];
            for j in i + 1..k {
                s -= self.r[j][i] * x[j];
            }
            x[i] = s / self.r[i][i];
        }
        (x, resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        CMatrix::from_row_major(rows, cols, (0..rows * cols).map(|_| C64::new(next(), next())).collect())
    }

    fn max_abs(v: &[C64]) -> f64 {
        v.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn full_rank_least_squares_satisfies_normal_equations() {
        let a = rng_matrix(12, 5, 1);
        let b = rng_matrix(12, 1, 2).column(0);
        let (x, rank) = lstsq(&a, &b);
        assert_eq!(rank, 5);
        let r: Vec<C64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(max_abs(&a.adjoint_mul_vec(&r)) < 1e-12);
    }

    #[test]
    fn rank_deficient_least_squares_is_minimum_norm() {
        let base = rng_matrix(8, 3, 3);
        // fourth and fifth columns duplicate earlier ones
        let cols = [base.column(0), base.column(1), base.column(2), base.column(0), base.column(1)];
        let a = CMatrix::from_columns(8, &cols);
        let b = rng_matrix(8, 1, 4).column(0);
        let (x, rank) = lstsq(&a, &b);
        assert_eq!(rank, 3);
        // minimum norm: x splits evenly between duplicated columns
        assert!((x[0] - x[3]).norm() < 1e-10);
        assert!((x[1] - x[4]).norm() < 1e-10);
        let r: Vec<C64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(max_abs(&a.adjoint_mul_vec(&r)) < 1e-10);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated() {
        let c = rng_matrix(3, 7, 5);
        let n = null_space(&c);
        assert_eq!(n.len(), 4);
        for (i, v) in n.iter().enumerate() {
            assert!(max_abs(&c.mul_vec(v)) < 1e-12);
            for (j, w) in n.iter().enumerate() {
                let d = crate::math::dot(v, w);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_eigenvalues_of_known_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let h = CMatrix::from_row_major(
            2,
            2,
            vec![C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        );
        let e = hermitian_eigenvalues(&h);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_trace_identity() {
        let a = rng_matrix(6, 4, 9);
        let s = singular_values(&a);
        let fro: f64 = a.as_slice().iter().map(|z| z.norm_sqr()).sum();
        assert!((s.iter().map(|x| x * x).sum::<f64>() - fro).abs() < 1e-10);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn incremental_qr_matches_lstsq() {
        let a = rng_matrix(10, 4, 11);
        let b = rng_matrix(10, 1, 12).column(0);
        let mut inc = IncrementalQr::new();
        for j in 0..4 {
            assert!(inc.push(&a.column(j)));
        }
        let (x, _) = inc.solve(&b);
        let (y, _) = lstsq(&a, &b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).norm() < 1e-12);
        }
        assert!(!inc.push(&a.column(2)));
        assert!(inc.is_rank_deficient());
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = rng_matrix(6, 6, 13);
        let spd = a.adjoint().matmul(&a);
        let b = rng_matrix(6, 1, 14).column(0);
        let x = conjugate_gradient(|u, out| out.copy_from_slice(&spd.mul_vec(u)), &b, 1e-14, 200);
        let r: Vec<C64> = spd.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(max_abs(&r) < 1e-9);
    }
}
