//! Dense linear algebra checked against nalgebra.

use cjs_core::linalg::{hermitian_eigenvalues, lstsq, null_space, singular_values, CMatrix};
use cjs_core::C64;
use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;

fn to_na(a: &CMatrix) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), rows * cols)
        .prop_map(move |v| CMatrix::from_row_major(rows, cols, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn singular_values_match(a in matrix(9, 5)) {
        let ours = singular_values(&a);
        let mut theirs: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
        prop_assert_eq!(ours.len(), theirs.len());
        for (x, y) in ours.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y));
        }
    }

    #[test]
    fn hermitian_spectrum_matches(a in matrix(6, 6)) {
        let h = a.adjoint().matmul(&a);
        let ours = hermitian_eigenvalues(&h);
        let mut theirs: Vec<f64> = to_na(&h).symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in ours.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn least_squares_matches(a in matrix(12, 4), b in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 12)) {
        let b: Vec<C64> = b.into_iter().map(|(x, y)| C64::new(x, y)).collect();
        let (x, rank) = lstsq(&a, &b);
        prop_assert_eq!(rank, 4);
        let svd = to_na(&a).svd(true, true);
        let reference = svd.solve(&DVector::from_vec(b.clone()), 1e-12).unwrap();
        for (u, v) in x.iter().zip(reference.iter()) {
            prop_assert!((u - v).norm() <= 1e-9);
        }
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated(c in matrix(3, 7)) {
        let basis = null_space(&c);
        prop_assert_eq!(basis.len(), 4);
        let na = to_na(&c);
        for (i, u) in basis.iter().enumerate() {
            let cu = &na * DVector::from_vec(u.clone());
            prop_assert!(cu.norm() <= 1e-10);
            for (j, v) in basis.iter().enumerate() {
                let dot: C64 = u.iter().zip(v).map(|(x, y)| x.conj() * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - C64::new(expected, 0.0)).norm() <= 1e-10);
            }
        }
    }
}

#[test]
fn rank_deficient_least_squares_is_minimum_norm() {
    let cols = [
        vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, 0.0)],
        vec![C64::new(2.0, 0.0), C64::new(0.0, 2.0), C64::new(4.0, 0.0)],
    ];
    let a = CMatrix::from_columns(3, &cols);
    let b = vec![C64::new(1.0, 0.0), C64::new(1.0, 1.0), C64::new(0.0, -1.0)];
    let (x, rank) = lstsq(&a, &b);
    assert_eq!(rank, 1);
    let pinv = to_na(&a).pseudo_inverse(1e-12).unwrap();
    let reference = pinv * DVector::from_vec(b);
    for (u, v) in x.iter().zip(reference.iter()) {
        assert!((u - v).norm() <= 1e-10);
    }
}
