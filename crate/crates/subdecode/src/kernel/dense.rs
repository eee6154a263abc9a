use crate::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Sized for master-node work: code matrices (`P x k`), iterate blocks
/// (`k x b`), eigenvector panels (`N x r`). Nothing here is tuned for large
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_values(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::dim(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::dim("ragged rows".to_string()));
            }
            values.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m.values[i * n_cols + j] = f(i, j);
            }
        }
        m
    }

    /// A column vector wrapped as an `n x 1` matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        DenseMatrix {
            n_rows: v.len(),
            n_cols: 1,
            values: v.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t.values[j * self.n_rows + i] = self.values[i * self.n_cols + j];
            }
        }
        t
    }

    /// Columns `[lo, hi)` as a new matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> DenseMatrix {
        assert!(lo <= hi && hi <= self.n_cols);
        let mut out = Self::zeros(self.n_rows, hi - lo);
        for i in 0..self.n_rows {
            out.row_mut(i)
                .copy_from_slice(&self.row(i)[lo..hi]);
        }
        out
    }

    /// Rows `[lo, hi)` as a new matrix.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> DenseMatrix {
        assert!(lo <= hi && hi <= self.n_rows);
        DenseMatrix {
            n_rows: hi - lo,
            n_cols: self.n_cols,
            values: self.values[lo * self.n_cols..hi * self.n_cols].to_vec(),
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::dim(format!(
                "matmul {}x{} * {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let a_row = self.row(i);
            let out_row = &mut out.values[i * other.n_cols..(i + 1) * other.n_cols];
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(kk);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dim(format!(
                "mat_vec {}x{} * len {}",
                self.n_rows,
                self.n_cols,
                x.len()
            )));
        }
        Ok((0..self.n_rows)
            .map(|i| dot(self.row(i), x))
            .collect())
    }

    /// `self += alpha * other` (same shape).
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseMatrix) {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max |A^T A - I| entry over the columns of `self`.
    pub fn gram_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for a in 0..self.n_cols {
            for b in a..self.n_cols {
                let mut s = 0.0;
                for i in 0..self.n_rows {
                    s += self.get(i, a) * self.get(i, b);
                }
                let target = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((s - target).abs());
            }
        }
        dev
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Distance between the column spans of two orthonormal matrices,
/// `||X X^T - Y Y^T||_F / sqrt(2 r)`, always in `[0, 1]`.
///
/// Invariant to column order and sign, which makes it usable as an error
/// metric for eigenvector estimates. Errors if the inputs do not have
/// orthonormal columns (Gram deviation above 1e-6) or differ in shape.
pub fn subspace_distance(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    if x.n_rows() != y.n_rows() || x.n_cols() != y.n_cols() {
        return Err(Error::dim(format!(
            "subspace_distance {}x{} vs {}x{}",
            x.n_rows(),
            x.n_cols(),
            y.n_rows(),
            y.n_cols()
        )));
    }
    let r = x.n_cols();
    if r == 0 {
        return Ok(0.0);
    }
    for (name, m) in [("first", x), ("second", y)] {
        let dev = m.gram_deviation();
        if dev > 1e-6 {
            return Err(Error::DegenerateBasis(format!(
                "{name} argument of subspace_distance is not orthonormal (deviation {dev:.3e})"
            )));
        }
    }
    // ||XX^T - YY^T||_F^2 = 2r - 2 ||X^T Y||_F^2 for orthonormal X, Y.
    let cross = x.transpose().matmul(y)?;
    let c2 = cross.values().iter().map(|v| v * v).sum::<f64>();
    let sq = (2.0 * r as f64 - 2.0 * c2).max(0.0);
    Ok((sq / (2.0 * r as f64)).sqrt())
}

/// Max entrywise difference of the projectors `X X^T` and `Y Y^T`.
///
/// Unlike [`subspace_distance`] this forms the projector entries directly, so
/// it stays accurate down to round-off when the spans coincide. Quadratic in
/// the row count; meant for verification on small instances.
pub fn projector_max_diff(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
    assert_eq!(x.n_rows(), y.n_rows());
    let n = x.n_rows();
    let mut diff: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let px = dot(x.row(i), x.row(j));
            let py = dot(y.row(i), y.row(j));
            diff = diff.max((px - py).abs());
        }
    }
    diff
}
