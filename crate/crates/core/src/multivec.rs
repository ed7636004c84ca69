//! Multi-vectors: `m x d` complex arrays whose rows are locations and whose
//! columns are channels.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{norm_sqr, sqrt};
use crate::C64;

/// Exponent of a mixed `(b,a)` norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    One,
    Two,
    Inf,
}

impl Exponent {
    /// Accepts `1`, `2` or `f64::INFINITY`.
    pub fn from_f64(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Exponent::One)
        } else if p == 2.0 {
            Ok(Exponent::Two)
        } else if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Inf)
        } else {
            Err(invalid(alloc::format!("unsupported norm exponent {p}")))
        }
    }

    fn vector_norm(self, v: &[C64]) -> f64 {
        match self {
            Exponent::One => v.iter().map(|z| crate::math::abs(*z)).sum(),
            Exponent::Two => sqrt(v.iter().map(|z| norm_sqr(*z)).sum()),
            Exponent::Inf => v.iter().map(|z| crate::math::abs(*z)).fold(0.0, f64::max),
        }
    }

    fn combine(self, norms: impl Iterator<Item = f64>) -> f64 {
        match self {
            Exponent::One => norms.sum(),
            Exponent::Two => sqrt(norms.map(|x| x * x).sum()),
            Exponent::Inf => norms.fold(0.0, f64::max),
        }
    }
}

/// Ordered set of row indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts and validates `indices` against the ambient size `m`.
    pub fn new(mut indices: Vec<usize>, m: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("support contains duplicate indices"));
        }
        if let Some(&last) = indices.last() {
            if last >= m {
                return Err(invalid(alloc::format!("support index {last} out of range for m = {m}")));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// `|A ∩ B| / |A ∪ B|`, with two empty sets counting as identical.
    pub fn jaccard(&self, other: &SupportSet) -> f64 {
        let inter = self.indices.iter().filter(|i| other.contains(**i)).count();
        let union = self.len() + other.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// An `m x d` complex multi-vector stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiVector {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl MultiVector {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    /// Builds from row-major data. Entries must be finite.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("multi-vector needs at least one row and one column"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("multi-vector entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    /// Real rows, embedded with zero imaginary part.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(invalid("columns of unequal length"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::from_row_major(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[C64]) {
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        Exponent::Two.vector_norm(self.row(i))
    }

    /// `(sum_j ||row_j||_a^b)^(1/b)`; `b = inf` takes the max row norm.
    pub fn norm(&self, b: Exponent, a: Exponent) -> f64 {
        b.combine((0..self.rows).map(|i| a.vector_norm(self.row(i))))
    }

    /// Same as [`MultiVector::norm`] with numeric exponents.
    pub fn norm_ba(&self, b: f64, a: f64) -> Result<f64> {
        Ok(self.norm(Exponent::from_f64(b)?, Exponent::from_f64(a)?))
    }

    /// Frobenius norm, i.e. the `(2,2)` norm.
    pub fn frobenius(&self) -> f64 {
        self.norm(Exponent::Two, Exponent::Two)
    }

    /// `sum_ij conj(A_ij) B_ij`.
    pub fn inner(&self, other: &MultiVector) -> Result<C64> {
        self.check_shape(other)?;
        Ok(crate::math::dot(&self.data, &other.data))
    }

    /// Rows whose 2-norm is strictly greater than `tol`, ascending.
    pub fn row_support(&self, tol: f64) -> SupportSet {
        let indices = (0..self.rows).filter(|&i| self.row_norm(i) > tol).collect();
        SupportSet { indices }
    }

    /// Keeps the `s` rows of largest 2-norm (lower index wins ties) and
    /// zeroes the rest.
    pub fn best_s_row_approx(&self, s: usize) -> Result<MultiVector> {
        if s > self.rows {
            return Err(invalid(alloc::format!("s = {s} exceeds m = {}", self.rows)));
        }
        let keep = self.largest_rows(s);
        let mut out = MultiVector::zeros(self.rows, self.cols);
        for &i in keep.indices() {
            out.row_mut(i).copy_from_slice(self.row(i));
        }
        Ok(out)
    }

    /// Indices of the `s` largest rows in 2-norm.
    pub fn largest_rows(&self, s: usize) -> SupportSet {
        let norms: Vec<f64> = (0..self.rows).map(|i| self.row_norm(i)).collect();
        let mut order: Vec<usize> = (0..self.rows).collect();
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        order.truncate(s.min(self.rows));
        order.sort_unstable();
        SupportSet { indices: order }
    }

    /// Copy with all rows outside `support` set to zero.
    pub fn restrict(&self, support: &SupportSet) -> MultiVector {
        let mut out = MultiVector::zeros(self.rows, self.cols);
        for &i in support.indices() {
            out.row_mut(i).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn sub(&self, other: &MultiVector) -> Result<MultiVector> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(MultiVector { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, other: &MultiVector) -> Result<MultiVector> {
        self.check_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(MultiVector { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, c: C64) -> MultiVector {
        MultiVector { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * c).collect() }
    }

    fn check_shape(&self, other: &MultiVector) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(invalid(alloc::format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn lcg_multivector(rows: usize, cols: usize, mut seed: u64) -> MultiVector {
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let data = (0..rows * cols).map(|_| C64::new(next(), next())).collect();
        MultiVector::from_row_major(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_has_zero_norms() {
        let z = MultiVector::zeros(3, 2);
        for b in [Exponent::One, Exponent::Two, Exponent::Inf] {
            for a in [Exponent::One, Exponent::Two, Exponent::Inf] {
                assert_eq!(z.norm(b, a), 0.0);
            }
        }
    }

    #[test]
    fn three_four_five_row() {
        let x = MultiVector::from_real_rows(&[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(x.norm_ba(1.0, 2.0).unwrap(), 5.0);
    }

    #[test]
    fn identity_rows_frobenius() {
        let x = MultiVector::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((x.norm_ba(2.0, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(x.inner(&x).unwrap(), c(2.0));
        assert_eq!(x.inner(&MultiVector::zeros(2, 2)).unwrap(), c(0.0));
    }

    #[test]
    fn unsupported_exponent_rejected() {
        let x = MultiVector::zeros(2, 2);
        assert!(matches!(x.norm_ba(3.0, 2.0), Err(Error::InvalidArgument(_))));
        assert!(x.norm_ba(f64::INFINITY, 2.0).is_ok());
    }

    #[test]
    fn inner_matches_double_loop() {
        let a = lcg_multivector(4, 2, 1);
        let b = lcg_multivector(4, 2, 2);
        let mut brute = c(0.0);
        for i in 0..4 {
            for j in 0..2 {
                brute += a.get(i, j).conj() * b.get(i, j);
            }
        }
        assert!((a.inner(&b).unwrap() - brute).norm() < 1e-14);
        assert!(a.inner(&MultiVector::zeros(3, 2)).is_err());
    }

    #[test]
    fn row_support_cases() {
        assert!(MultiVector::zeros(4, 2).row_support(0.0).is_empty());
        let x = MultiVector::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(x.row_support(0.0).indices(), &[0, 2]);
        let r = lcg_multivector(9, 3, 5).best_s_row_approx(4).unwrap();
        let brute = (0..9).filter(|&i| r.row(i).iter().any(|z| z.norm() > 0.0)).count();
        assert_eq!(r.row_support(0.0).len(), brute);
    }

    #[test]
    fn best_s_rows_keeps_largest() {
        let x = MultiVector::from_real_rows(&[vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        let b = x.best_s_row_approx(2).unwrap();
        assert_eq!(b.row_support(0.0).indices(), &[0, 2]);
        assert_eq!(b.best_s_row_approx(2).unwrap(), b);
        assert!(x.best_s_row_approx(4).is_err());
    }

    #[test]
    fn best_s_rows_ties_go_to_lower_index() {
        let x = MultiVector::from_real_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(x.best_s_row_approx(2).unwrap().row_support(0.0).indices(), &[0, 1]);
    }

    #[test]
    fn best_s_rows_beats_every_support() {
        let x = lcg_multivector(6, 2, 42);
        let best = x.sub(&x.best_s_row_approx(3).unwrap()).unwrap().norm(Exponent::One, Exponent::Two);
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let idx: Vec<usize> = (0..6).filter(|i| mask & (1 << i) != 0).collect();
            let z = x.restrict(&SupportSet::new(idx, 6).unwrap());
            let err = x.sub(&z).unwrap().norm(Exponent::One, Exponent::Two);
            assert!(best <= err + 1e-14);
        }
    }

    #[test]
    fn support_set_validation() {
        assert!(SupportSet::new(vec![1, 1], 4).is_err());
        assert!(SupportSet::new(vec![4], 4).is_err());
        assert_eq!(SupportSet::new(vec![3, 0], 4).unwrap().indices(), &[0, 3]);
    }
}
