use crate::kernel::dense::DenseMatrix;
use crate::{Error, Result};

/// Compressed-row sparse matrix.
///
/// Invariants: `row_offsets` is monotone with length `n_rows + 1`, column
/// indices are within range and strictly increasing inside each row (so no
/// duplicates). Construction through [`SparseMatrix::from_triplets`] sums
/// duplicate entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::dim(format!(
                    "triplet ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut row = 0usize;
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            while row < r {
                row_offsets.push(col_indices.len());
                row += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
            }
        }
        while row < n_rows {
            row_offsets.push(col_indices.len());
            row += 1;
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let triplets = (0..m.n_rows()).flat_map(|i| {
            (0..m.n_cols()).filter_map(move |j| {
                let v = m.get(i, j);
                (v != 0.0).then_some((i, j, v))
            })
        });
        Self::from_triplets(m.n_rows(), m.n_cols(), triplets).expect("in-range by construction")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row_entries(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    /// Sparse matrix-vector product `B x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dim(format!(
                "spmv: {}x{} with vector of length {}",
                self.n_rows,
                self.n_cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for idx in lo..hi {
                acc += self.values[idx] * x[self.col_indices[idx]];
            }
            y[i] = acc;
        }
        Ok(y)
    }

    /// Sparse matrix-dense matrix product `B X`, column-wise [`spmv`].
    ///
    /// [`spmv`]: SparseMatrix::spmv
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.n_rows() != self.n_cols {
            return Err(Error::dim(format!(
                "spmm: {}x{} with {}x{}",
                self.n_rows,
                self.n_cols,
                x.n_rows(),
                x.n_cols()
            )));
        }
        let r = x.n_cols();
        let mut out = DenseMatrix::zeros(self.n_rows, r);
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let out_row = out.row_mut(i);
            for idx in lo..hi {
                let v = self.values[idx];
                let x_row = x.row(self.col_indices[idx]);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// `B^T x` without materialising the transpose.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::dim(format!(
                "spmv_transpose: {}x{} with vector of length {}",
                self.n_rows,
                self.n_cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.n_cols];
        for i in 0..self.n_rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row_entries(i) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    /// `B^T X` without materialising the transpose.
    pub fn spmm_transpose(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.n_rows() != self.n_rows {
            return Err(Error::dim(format!(
                "spmm_transpose: {}x{} with {}x{}",
                self.n_rows,
                self.n_cols,
                x.n_rows(),
                x.n_cols()
            )));
        }
        let r = x.n_cols();
        let mut out = DenseMatrix::zeros(self.n_cols, r);
        for i in 0..self.n_rows {
            let x_row = x.row(i);
            for (j, v) in self.row_entries(i) {
                let out_row = out.row_mut(j);
                for (o, &xv) in out_row.iter_mut().zip(x_row) {
                    *o += v * xv;
                }
            }
        }
        Ok(out)
    }

    /// Rows `[lo, hi)` as a new matrix (same column count).
    pub fn slice_rows(&self, lo: usize, hi: usize) -> SparseMatrix {
        assert!(lo <= hi && hi <= self.n_rows);
        let base = self.row_offsets[lo];
        let end = self.row_offsets[hi];
        SparseMatrix {
            n_rows: hi - lo,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets[lo..=hi].iter().map(|o| o - base).collect(),
            col_indices: self.col_indices[base..end].to_vec(),
            values: self.values[base..end].to_vec(),
        }
    }

    /// Columns `[lo, hi)` as a new matrix (same row count).
    pub fn slice_cols(&self, lo: usize, hi: usize) -> SparseMatrix {
        assert!(lo <= hi && hi <= self.n_cols);
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.n_rows {
            for (j, v) in self.row_entries(i) {
                if j >= lo && j < hi {
                    col_indices.push(j - lo);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: hi - lo,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Embed into a larger zero matrix (extra rows/columns appended).
    pub fn pad_to(&self, n_rows: usize, n_cols: usize) -> SparseMatrix {
        assert!(n_rows >= self.n_rows && n_cols >= self.n_cols);
        let mut row_offsets = self.row_offsets.clone();
        row_offsets.resize(n_rows + 1, self.nnz());
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices: self.col_indices.clone(),
            values: self.values.clone(),
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for (_, j, v) in self.entries() {
            sums[j] += v;
        }
        sums
    }

    pub fn max_symmetry_deviation(&self) -> f64 {
        let t = self.transpose();
        let mut dev: f64 = 0.0;
        // Entries are sorted identically in both, so walk them in parallel.
        let mut t_entries = t.entries();
        let mut s_entries = self.entries();
        loop {
            match (s_entries.next(), t_entries.next()) {
                (None, None) => break,
                (Some((i, j, v)), Some((i2, j2, v2))) => {
                    if i == i2 && j == j2 {
                        dev = dev.max((v - v2).abs());
                    } else {
                        // Structurally different supports: bound by the values.
                        dev = dev.max(v.abs().max(v2.abs()));
                    }
                }
                (Some((_, _, v)), None) | (None, Some((_, _, v))) => dev = dev.max(v.abs()),
            }
        }
        dev
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.n_cols,
            self.n_rows,
            self.entries().map(|(i, j, v)| (j, i, v)),
        )
        .expect("in-range by construction")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.entries() {
            out.set(i, j, v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n_rows: usize, n_cols: usize, density: f64, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                if rng.random::<f64>() < density {
                    triplets.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        SparseMatrix::from_triplets(n_rows, n_cols, triplets).unwrap()
    }

    /// Dense triple-loop oracle for B x.
    fn dense_mat_vec(b: &DenseMatrix, x: &[f64]) -> Vec<f64> {
        (0..b.n_rows())
            .map(|i| (0..b.n_cols()).map(|j| b.get(i, j) * x[j]).sum())
            .collect()
    }

    #[test]
    fn spmv_identity() {
        let b = SparseMatrix::identity(3);
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(b.spmv(&x).unwrap(), x);
    }

    #[test]
    fn spmv_zero_matrix() {
        let b = SparseMatrix::zeros(4, 3);
        assert_eq!(b.spmv(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let b = random_sparse(20, 20, 0.3, 7);
        let dense = b.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..20).map(|_| rng.random::<f64>() - 0.5).collect();
        let got = b.spmv(&x).unwrap();
        let want = dense_mat_vec(&dense, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let b = SparseMatrix::zeros(3, 4);
        assert!(b.spmv(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn spmm_identity_and_single_column() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = SparseMatrix::identity(3);
        assert_eq!(b.spmm(&x).unwrap(), x);

        let b = random_sparse(5, 3, 0.5, 11);
        let col0 = x.slice_cols(0, 1);
        let via_spmm = b.spmm(&col0).unwrap();
        let via_spmv = b.spmv(&x.column(0)).unwrap();
        for (i, &v) in via_spmv.iter().enumerate() {
            assert_eq!(via_spmm.get(i, 0), v);
        }
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        let b = random_sparse(15, 15, 0.25, 3);
        let dense = b.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DenseMatrix::from_fn(15, 4, |_, _| rng.random::<f64>() - 0.5);
        let got = b.spmm(&x).unwrap();
        let want = dense.matmul(&x).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn transpose_products_match() {
        let b = random_sparse(12, 9, 0.4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
        let got = b.spmv_transpose(&x).unwrap();
        let want = b.transpose().spmv(&x).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn triplets_sum_duplicates() {
        let b =
            SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, -1.0)]).unwrap();
        assert_eq!(b.nnz(), 2);
        assert_eq!(b.to_dense().get(0, 0), 3.0);
    }

    #[test]
    fn slices_and_padding() {
        let b = random_sparse(10, 10, 0.3, 9);
        let rows = b.slice_rows(2, 7);
        assert_eq!(rows.to_dense(), b.to_dense().slice_rows(2, 7));
        let cols = b.slice_cols(1, 4);
        assert_eq!(cols.to_dense(), b.to_dense().slice_cols(1, 4));
        let padded = b.pad_to(12, 13);
        assert_eq!(padded.slice_rows(0, 10).slice_cols(0, 10), b);
        assert_eq!(padded.nnz(), b.nnz());
    }

    #[test]
    fn symmetry_deviation() {
        let sym = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(sym.max_symmetry_deviation(), 0.0);
        let asym = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 2.0)]).unwrap();
        assert_eq!(asym.max_symmetry_deviation(), 2.0);
    }
}
