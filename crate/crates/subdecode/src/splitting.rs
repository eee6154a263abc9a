//! Matrix and vector partitioning: row, column and SUMMA splitting, the
//! vec/mat reshaping operators, and encoded-storage assignment of blocks to
//! workers.
//!
//! Lengths that do not divide evenly are zero-padded; for square iteration
//! matrices both dimensions are padded together so the fixed point is
//! preserved with the iterate padded by zeros.

use crate::codes::SparsityPattern;
use crate::kernel::{DenseMatrix, SparseMatrix};
use crate::{Error, Result};

/// How the system or data matrix is partitioned across workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    Row,
    Column,
    Summa,
}

/// Geometry of a partition: `k` blocks of `block_size` (per side for SUMMA),
/// with `pad` appended zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub splits: usize,
    pub block_size: usize,
    pub pad: usize,
    pub original_len: usize,
}

impl SplitPlan {
    /// Padded length of the split dimension (`k * b`, or `sqrt(k) * b` per
    /// side for SUMMA).
    pub fn padded_len(&self) -> usize {
        match self.scheme {
            SplitScheme::Row | SplitScheme::Column => self.splits * self.block_size,
            SplitScheme::Summa => self.side() * self.block_size,
        }
    }

    /// SUMMA grid side `sqrt(k)`.
    pub fn side(&self) -> usize {
        (self.splits as f64).sqrt().round() as usize
    }

    /// Index range of block `j` along the split dimension.
    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        j * self.block_size..(j + 1) * self.block_size
    }
}

/// Decide block size and padding for splitting a length-`n` dimension into
/// `k` blocks (for SUMMA, `k` must be a perfect square and the matrix is cut
/// into a `sqrt(k) x sqrt(k)` grid).
pub fn plan_split(n: usize, scheme: SplitScheme, k: usize) -> Result<SplitPlan> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot split length {n} into {k} blocks"
        )));
    }
    let per = match scheme {
        SplitScheme::Row | SplitScheme::Column => k,
        SplitScheme::Summa => {
            let g = (k as f64).sqrt().round() as usize;
            if g * g != k {
                return Err(Error::InvalidArgument(format!(
                    "SUMMA needs a perfect-square split count, got {k}"
                )));
            }
            g
        }
    };
    let block_size = n.div_ceil(per);
    Ok(SplitPlan {
        scheme,
        splits: k,
        block_size,
        pad: per * block_size - n,
        original_len: n,
    })
}

/// Everything a simulated worker stores: its pattern-assigned sparse blocks,
/// and for row splitting the matching slices of the input vector.
#[derive(Debug, Clone)]
pub struct WorkerStore {
    pub worker_id: usize,
    pub blocks: Vec<(usize, SparseMatrix)>,
    pub y_parts: Vec<(usize, Vec<f64>)>,
}

impl WorkerStore {
    pub fn stored_nnz(&self) -> usize {
        self.blocks.iter().map(|(_, b)| b.nnz()).sum()
    }
}

/// Total materialised non-zeros across all workers (the storage-cost figure).
pub fn total_stored_nnz(stores: &[WorkerStore]) -> usize {
    stores.iter().map(WorkerStore::stored_nnz).sum()
}

/// Zero-pad a system matrix to the plan's padded geometry. Square matrices
/// are padded on both dimensions so that power iterations keep their fixed
/// point; rectangular ones only on the split dimension (rows for [`Row`],
/// columns for [`Column`] splitting).
///
/// [`Row`]: SplitScheme::Row
/// [`Column`]: SplitScheme::Column
pub fn pad_system(b: &SparseMatrix, plan: &SplitPlan) -> SparseMatrix {
    let len = plan.padded_len();
    let square = b.n_rows() == b.n_cols();
    match (plan.scheme, square) {
        (_, true) => b.pad_to(len, len),
        (SplitScheme::Row, false) => b.pad_to(len, b.n_cols()),
        (SplitScheme::Column, false) => b.pad_to(b.n_rows(), len),
        (SplitScheme::Summa, false) => b.pad_to(len, len),
    }
}

/// Zero-pad a vector to the plan's padded length.
pub fn pad_vector(v: &[f64], plan: &SplitPlan) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(plan.padded_len(), 0.0);
    out
}

/// Drop the padding entries again.
pub fn unpad_vector(v: &[f64], plan: &SplitPlan) -> Vec<f64> {
    v[..plan.original_len].to_vec()
}

/// Materialise each worker's pattern-assigned blocks.
///
/// Row/Column: block `j` of the padded matrix goes to every worker `i` with
/// `pattern[i][j] = 1`; for row splitting the input vector is sliced the same
/// way. SUMMA: `pattern` is the per-group `(P/sqrt(k), sqrt(k))` code, group
/// `j` holds the column-strip blocks `B_{i j}` with flat index `i*sqrt(k)+j`,
/// and workers are numbered group-major.
pub fn assign_storage(
    b: &SparseMatrix,
    y: Option<&[f64]>,
    plan: &SplitPlan,
    pattern: &SparsityPattern,
) -> Result<Vec<WorkerStore>> {
    let padded = pad_system(b, plan);
    match plan.scheme {
        SplitScheme::Row | SplitScheme::Column => {
            if pattern.splits() != plan.splits {
                return Err(Error::dim(format!(
                    "pattern has {} splits, plan has {}",
                    pattern.splits(),
                    plan.splits
                )));
            }
            let y_padded = y.map(|v| pad_vector(v, plan));
            let mut stores = Vec::with_capacity(pattern.workers());
            for w in 0..pattern.workers() {
                let mut blocks = Vec::new();
                let mut y_parts = Vec::new();
                for j in pattern.row_support(w) {
                    let range = plan.block_range(j);
                    let block = match plan.scheme {
                        SplitScheme::Row => padded.slice_rows(range.start, range.end),
                        SplitScheme::Column => padded.slice_cols(range.start, range.end),
                        SplitScheme::Summa => unreachable!(),
                    };
                    blocks.push((j, block));
                    if plan.scheme == SplitScheme::Row {
                        if let Some(yp) = &y_padded {
                            y_parts.push((j, yp[range.clone()].to_vec()));
                        }
                    }
                }
                stores.push(WorkerStore {
                    worker_id: w,
                    blocks,
                    y_parts,
                });
            }
            Ok(stores)
        }
        SplitScheme::Summa => {
            let g = plan.side();
            if pattern.splits() != g {
                return Err(Error::dim(format!(
                    "SUMMA group pattern has {} splits, expected sqrt(k) = {g}",
                    pattern.splits()
                )));
            }
            let per_group = pattern.workers();
            let y_padded = y.map(|v| pad_vector(v, plan));
            let mut stores = Vec::with_capacity(per_group * g);
            for group in 0..g {
                let col_range = plan.block_range(group);
                let strip = padded.slice_cols(col_range.start, col_range.end);
                for m in 0..per_group {
                    let w = group * per_group + m;
                    let mut blocks = Vec::new();
                    let mut y_parts = Vec::new();
                    for i in pattern.row_support(m) {
                        let row_range = plan.block_range(i);
                        blocks.push((i * g + group, strip.slice_rows(row_range.start, row_range.end)));
                        if let Some(yp) = &y_padded {
                            y_parts.push((i * g + group, yp[row_range.clone()].to_vec()));
                        }
                    }
                    stores.push(WorkerStore {
                        worker_id: w,
                        blocks,
                        y_parts,
                    });
                }
            }
            Ok(stores)
        }
    }
}

/// Stack a matrix into the concatenation of its transposed rows (row-major
/// flatten); the length-`k b` vector form of a `k x b` block matrix.
pub fn vec_of(x: &DenseMatrix) -> Vec<f64> {
    x.values().to_vec()
}

/// Partition `v` into length-`b` slices stacked as matrix rows; inverse of
/// [`vec_of`].
pub fn mat_of(v: &[f64], b: usize) -> Result<DenseMatrix> {
    if b == 0 || !v.len().is_multiple_of(b) {
        return Err(Error::dim(format!(
            "vector of length {} is not divisible into length-{b} blocks",
            v.len()
        )));
    }
    DenseMatrix::from_values(v.len() / b, b, v.to_vec())
}

/// Apply `(A kron I_b)` to `v` without forming the Kronecker product:
/// `vec(A mat(v, b))`.
pub fn kron_apply(a: &DenseMatrix, v: &[f64], b: usize) -> Result<Vec<f64>> {
    let m = mat_of(v, b)?;
    if m.n_rows() != a.n_cols() {
        return Err(Error::dim(format!(
            "kron_apply: {}x{} against {} blocks",
            a.n_rows(),
            a.n_cols(),
            m.n_rows()
        )));
    }
    Ok(vec_of(&a.matmul(&m)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn vec_and_mat_basics() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(vec_of(&x), vec![1.0, 2.0, 3.0, 4.0]);
        let single = DenseMatrix::from_rows(&[vec![5.0, 6.0, 7.0]]).unwrap();
        assert_eq!(vec_of(&single), vec![5.0, 6.0, 7.0]);
        let back = mat_of(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(back, x);
        let one_row = mat_of(&[1.0, 2.0, 3.0], 3).unwrap();
        assert_eq!(one_row.n_rows(), 1);
        assert!(mat_of(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn kron_apply_identity_and_example() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let out = kron_apply(&DenseMatrix::identity(2), &v, 2).unwrap();
        assert_eq!(out, v.to_vec());
        // The 3x2 single-parity code acting on two blocks of length 2.
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let out = kron_apply(&a, &v, 2).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0, 4.0, 6.0]);
    }

    #[test]
    fn kron_apply_matches_explicit_kronecker() {
        let mut rng = stream(3);
        let a = DenseMatrix::from_fn(4, 3, |_, _| rng.random::<f64>() - 0.5);
        let b = 5;
        let v: Vec<f64> = (0..15).map(|_| rng.random::<f64>() - 0.5).collect();
        // Explicit Kronecker (A kron I_b) as a dense matrix.
        let big = DenseMatrix::from_fn(4 * b, 3 * b, |i, j| {
            if i % b == j % b {
                a.get(i / b, j / b)
            } else {
                0.0
            }
        });
        let want = big.mat_vec(&v).unwrap();
        let got = kron_apply(&a, &v, b).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn vec_mat_round_trip(rows in 1usize..8, cols in 1usize..8, seed in 0u64..1000) {
            let mut rng = stream(seed);
            let x = DenseMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
            prop_assert_eq!(mat_of(&vec_of(&x), cols).unwrap(), x.clone());
            let v = vec_of(&x);
            prop_assert_eq!(vec_of(&mat_of(&v, cols).unwrap()), v);
        }
    }

    #[test]
    fn plan_ceiling_arithmetic() {
        let plan = plan_split(10, SplitScheme::Row, 3).unwrap();
        assert_eq!(plan.block_size, 4);
        assert_eq!(plan.pad, 2);
        assert_eq!(plan.padded_len(), 12);
        let exact = plan_split(12, SplitScheme::Column, 3).unwrap();
        assert_eq!(exact.pad, 0);
    }

    #[test]
    fn plan_summa_requires_square() {
        assert!(plan_split(100, SplitScheme::Summa, 10).is_err());
        let plan = plan_split(100, SplitScheme::Summa, 4).unwrap();
        assert_eq!(plan.side(), 2);
        assert_eq!(plan.block_size, 50);
    }

    #[test]
    fn example_one_assignment() {
        // B1 stored at workers 0 and 2, B2 at workers 1 and 2.
        let pattern = SparsityPattern::from_mask(&[
            vec![true, false],
            vec![false, true],
            vec![true, true],
        ])
        .unwrap();
        let b = SparseMatrix::identity(4);
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let plan = plan_split(4, SplitScheme::Row, 2).unwrap();
        let stores = assign_storage(&b, Some(&y), &plan, &pattern).unwrap();
        let held: Vec<Vec<usize>> = stores
            .iter()
            .map(|s| s.blocks.iter().map(|(j, _)| *j).collect())
            .collect();
        assert_eq!(held, vec![vec![0], vec![1], vec![0, 1]]);
        // Worker 2's y parts are both halves.
        assert_eq!(stores[2].y_parts[0].1, vec![1.0, 2.0]);
        assert_eq!(stores[2].y_parts[1].1, vec![3.0, 4.0]);
        // Blocks are actual row slices.
        assert_eq!(stores[0].blocks[0].1.to_dense(), b.to_dense().slice_rows(0, 2));
    }

    #[test]
    fn padding_appends_zero_rows_and_cols() {
        let b = SparseMatrix::from_triplets(3, 3, vec![(0, 2, 1.0), (2, 0, 2.0)]).unwrap();
        let plan = plan_split(3, SplitScheme::Row, 2).unwrap();
        let padded = pad_system(&b, &plan);
        assert_eq!(padded.n_rows(), 4);
        assert_eq!(padded.n_cols(), 4);
        assert_eq!(padded.nnz(), b.nnz());
    }

    #[test]
    fn summa_assignment_geometry() {
        // k = 4 blocks in a 2x2 grid, per-group code (4, 2): 8 workers total.
        let mut rng = stream(9);
        let group_pattern = SparsityPattern::combined_cyclic(2, 1, &mut rng).unwrap();
        let b = SparseMatrix::identity(6);
        let plan = plan_split(6, SplitScheme::Summa, 4).unwrap();
        let stores = assign_storage(&b, None, &plan, &group_pattern).unwrap();
        assert_eq!(stores.len(), 8);
        // Group 0 workers (0..4) hold only blocks from column strip 0:
        // flat indices {0, 2}; group 1 workers hold {1, 3}.
        for s in &stores {
            let group = s.worker_id / 4;
            for (flat, block) in &s.blocks {
                assert_eq!(flat % 2, group);
                assert_eq!(block.n_rows(), 3);
                assert_eq!(block.n_cols(), 3);
            }
        }
    }

    #[test]
    fn storage_cost_matches_column_weights() {
        // Combined-cyclic blocks are column-regular with weight d each, so
        // every data block is materialised exactly 2d times.
        let mut rng = stream(21);
        let k = 6;
        let d = 2;
        let pattern = SparsityPattern::combined_cyclic(k, d, &mut rng).unwrap();
        let n = 18;
        let b = {
            let triplets = (0..n).flat_map(|i| {
                let mut r = stream(100 + i as u64);
                (0..n)
                    .filter_map(|j| (r.random::<f64>() < 0.3).then_some((i, j, 1.0)))
                    .collect::<Vec<_>>()
            });
            SparseMatrix::from_triplets(n, n, triplets).unwrap()
        };
        let plan = plan_split(n, SplitScheme::Row, k).unwrap();
        let stores = assign_storage(&b, None, &plan, &pattern).unwrap();
        let total = total_stored_nnz(&stores);
        let per_block: Vec<usize> = (0..k)
            .map(|j| {
                let r = plan.block_range(j);
                b.slice_rows(r.start, r.end).nnz()
            })
            .collect();
        let expected: usize = per_block.iter().map(|nnz| 2 * d * nnz).sum();
        assert_eq!(total, expected);
    }
}
