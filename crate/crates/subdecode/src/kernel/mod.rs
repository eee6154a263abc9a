//! Numeric kernel: sparse storage and products, small dense decompositions.

mod decomp;
mod dense;
mod sparse;

pub use decomp::{
    qr_small, svd_small, symeig_small, SvdResult, DEFAULT_RANK_TOL, SMALL_MATRIX_LIMIT,
};
pub(crate) use decomp::solve_spd;
pub use dense::{dot, norm2, projector_max_diff, subspace_distance, DenseMatrix};
pub use sparse::SparseMatrix;

#[cfg(test)]
mod invariant_tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = DenseMatrix> {
        (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |v| DenseMatrix::from_values(r, c, v).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn svd_reconstructs(m in matrix_strategy(12)) {
            let r = svd_small(&m, DEFAULT_RANK_TOL).unwrap();
            let resid = r.reconstruct().max_abs_diff(&m);
            prop_assert!(resid < 1e-9 * m.frobenius_norm().max(1.0));
            // vt orthonormal as a square matrix
            prop_assert!(r.vt.transpose().gram_deviation() < 1e-9);
        }

        #[test]
        fn qr_factors_are_consistent(m in matrix_strategy(10)) {
            prop_assume!(m.n_rows() >= m.n_cols());
            match qr_small(&m) {
                Ok((q, r)) => {
                    prop_assert!(q.gram_deviation() < 1e-9);
                    prop_assert!(q.matmul(&r).unwrap().max_abs_diff(&m) < 1e-9 * m.frobenius_norm().max(1.0));
                }
                Err(crate::Error::DegenerateBasis(_)) => {}
                Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
            }
        }

        #[test]
        fn qr_then_eig_spans_svd_subspace(m in matrix_strategy(8)) {
            // The accelerated orthogonal-iteration step can rotate via the
            // eigendecomposition of R R^T or via the SVD of R; both must span
            // the same subspace.
            prop_assume!(m.n_rows() >= m.n_cols());
            let (q, r) = match qr_small(&m) {
                Ok(qr) => qr,
                Err(_) => return Ok(()),
            };
            let rrt = r.matmul(&r.transpose()).unwrap();
            let (_, s_eig) = symeig_small(&rrt).unwrap();
            let svd = svd_small(&r, DEFAULT_RANK_TOL).unwrap();
            let x_eig = q.matmul(&s_eig).unwrap();
            let x_svd = q.matmul(&svd.u).unwrap();
            let d = projector_max_diff(&x_eig, &x_svd);
            prop_assert!(d < 1e-8, "projector difference {d:.3e}");
        }
    }
}
