//! Dense decompositions for small matrices.
//!
//! Everything that reaches this module has dimensions bounded by the worker
//! count, the split count or the eigenvector count (a few hundred at most),
//! so plain Jacobi-style algorithms are accurate and fast enough. No BLAS.

use crate::kernel::dense::DenseMatrix;
use crate::{Error, Result};

/// Largest dimension accepted by the small-matrix decompositions.
pub const SMALL_MATRIX_LIMIT: usize = 4096;

/// Default relative threshold on singular values when deciding numeric rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Result of [`svd_small`]: `M = U diag(sigma) V^T`.
///
/// `vt` is always the **full** `n x n` right factor, so its trailing rows span
/// the null space of `M`. `u` has `min(m, n)` columns; columns beyond
/// `numeric_rank` pair with (numerically) zero singular values and are zero.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub vt: DenseMatrix,
    pub numeric_rank: usize,
}

impl SvdResult {
    /// `U diag(sigma) V^T`, for reconstruction checks.
    pub fn reconstruct(&self) -> DenseMatrix {
        let m = self.u.n_rows();
        let n = self.vt.n_cols();
        let mut out = DenseMatrix::zeros(m, n);
        for (idx, &s) in self.singular_values.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for i in 0..m {
                let ui = self.u.get(i, idx) * s;
                if ui == 0.0 {
                    continue;
                }
                let v_row = self.vt.row(idx);
                let out_row = out.row_mut(i);
                for (o, &v) in out_row.iter_mut().zip(v_row) {
                    *o += ui * v;
                }
            }
        }
        out
    }
}

/// Singular value decomposition by one-sided Jacobi.
///
/// Columns of the working copy are rotated until mutually orthogonal; the
/// accumulated rotations form the full right factor, which is what the
/// decoding step needs (the orthogonal complement of the row space comes for
/// free). `numeric_rank` counts singular values above `rank_tol * sigma_max`.
pub fn svd_small(m: &DenseMatrix, rank_tol: f64) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::NonFinite("svd_small input"));
    }
    let (rows, cols) = (m.n_rows(), m.n_cols());
    let min_dim = rows.min(cols);
    if min_dim > SMALL_MATRIX_LIMIT {
        return Err(Error::TooLarge {
            min_dim,
            limit: SMALL_MATRIX_LIMIT,
        });
    }
    if rows == 0 || cols == 0 {
        return Ok(SvdResult {
            u: DenseMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            vt: DenseMatrix::identity(cols),
            numeric_rank: 0,
        });
    }

    // Work column-major so column rotations are contiguous.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let (ap, aq) = (&a[p], &a[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..rows {
                        alpha += ap[i] * ap[i];
                        beta += aq[i] * aq[i];
                        gamma += ap[i] * aq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort descending (stable on index).
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = a
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let kept = min_dim;
    let mut u = DenseMatrix::zeros(rows, kept);
    let mut vt = DenseMatrix::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(kept);
    for (slot, &j) in order.iter().enumerate() {
        // Sign convention: first entry of each right singular vector whose
        // magnitude rises above noise is made non-negative.
        let flip = v[j]
            .iter()
            .find(|x| x.abs() > 1e-300)
            .map_or(1.0, |x| x.signum());
        if slot < kept {
            let sigma = norms[j];
            singular_values.push(sigma);
            if sigma > 0.0 {
                for i in 0..rows {
                    u.set(i, slot, flip * a[j][i] / sigma);
                }
            }
        }
        for i in 0..cols {
            vt.set(slot, i, flip * v[j][i]);
        }
    }

    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let numeric_rank = singular_values
        .iter()
        .take_while(|&&s| s > rank_tol * sigma_max && s > 0.0)
        .count();

    Ok(SvdResult {
        u,
        singular_values,
        vt,
        numeric_rank,
    })
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let vp = *xp;
        let vq = *xq;
        *xp = c * vp - s * vq;
        *xq = s * vp + c * vq;
    }
}

/// Householder QR with thin `Q` (`m x n`) and a non-negative diagonal on `R`,
/// which makes the factorisation unique and traces reproducible.
///
/// Requires `m >= n`. A diagonal entry of `R` below `1e-12 * ||M||_F` means
/// the columns are numerically dependent and is reported as a degenerate
/// basis so callers can restart.
pub fn qr_small(m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if !m.is_finite() {
        return Err(Error::NonFinite("qr_small input"));
    }
    let (rows, cols) = (m.n_rows(), m.n_cols());
    if rows < cols {
        return Err(Error::dim(format!("qr_small needs rows >= cols, got {rows}x{cols}")));
    }
    let frob = m.frobenius_norm();

    let mut a = m.clone();
    // Householder vectors stored per step: (v, beta) with v[0] = 1 implicit.
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cols);
    for k in 0..cols {
        let mut v: Vec<f64> = (k..rows).map(|i| a.get(i, k)).collect();
        let sigma: f64 = v[1..].iter().map(|x| x * x).sum();
        let alpha = v[0];
        let beta;
        if sigma == 0.0 {
            beta = 0.0;
            v[0] = 1.0;
        } else {
            let mu = (alpha * alpha + sigma).sqrt();
            let v0 = if alpha <= 0.0 {
                alpha - mu
            } else {
                -sigma / (alpha + mu)
            };
            beta = 2.0 * v0 * v0 / (sigma + v0 * v0);
            for x in v.iter_mut() {
                *x /= v0;
            }
            v[0] = 1.0;
        }
        // Apply (I - beta v v^T) to A[k.., k..].
        for j in k..cols {
            let mut w = 0.0;
            for (off, vi) in v.iter().enumerate() {
                w += vi * a.get(k + off, j);
            }
            w *= beta;
            for (off, vi) in v.iter().enumerate() {
                let cur = a.get(k + off, j);
                a.set(k + off, j, cur - w * vi);
            }
        }
        reflectors.push((v, beta));
    }

    // R = upper triangle of the reduced matrix.
    let mut r = DenseMatrix::zeros(cols, cols);
    for i in 0..cols {
        for j in i..cols {
            r.set(i, j, a.get(i, j));
        }
    }

    // Thin Q: apply reflectors in reverse to the first `cols` columns of I.
    let mut q = DenseMatrix::zeros(rows, cols);
    for j in 0..cols {
        q.set(j, j, 1.0);
    }
    for k in (0..cols).rev() {
        let (v, beta) = &reflectors[k];
        if *beta == 0.0 {
            continue;
        }
        for j in 0..cols {
            let mut w = 0.0;
            for (off, vi) in v.iter().enumerate() {
                w += vi * q.get(k + off, j);
            }
            w *= beta;
            for (off, vi) in v.iter().enumerate() {
                let cur = q.get(k + off, j);
                q.set(k + off, j, cur - w * vi);
            }
        }
    }

    // Sign convention: non-negative diagonal of R.
    for i in 0..cols {
        if r.get(i, i) < 0.0 {
            for j in i..cols {
                let x = r.get(i, j);
                r.set(i, j, -x);
            }
            for row in 0..rows {
                let x = q.get(row, i);
                q.set(row, i, -x);
            }
        }
    }

    let threshold = 1e-12 * frob;
    for i in 0..cols {
        if r.get(i, i) <= threshold {
            return Err(Error::DegenerateBasis(format!(
                "R[{i},{i}] = {:.3e} below {threshold:.3e}",
                r.get(i, i)
            )));
        }
    }

    Ok((q, r))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order with matching eigenvector columns.
/// Input asymmetric beyond `1e-9 * max|entry|` (absolute for tiny matrices)
/// is rejected.
pub fn symeig_small(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !m.is_finite() {
        return Err(Error::NonFinite("symeig_small input"));
    }
    let n = m.n_rows();
    if n != m.n_cols() {
        return Err(Error::dim(format!("symeig_small: {}x{}", n, m.n_cols())));
    }
    let scale = m.max_abs().max(1.0);
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m.get(i, j) - m.get(j, i)).abs());
        }
    }
    if dev > 1e-9 * scale {
        return Err(Error::Asymmetric { deviation: dev });
    }

    // Symmetrise to kill the (tolerated) asymmetry before rotating.
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = DenseMatrix::identity(n);

    let frob = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * frob;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q.
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let aqi = a.get(q, i);
                    a.set(p, i, c * api - s * aqi);
                    a.set(q, i, s * api + c * aqi);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap().then(i.cmp(&j)));
    let eigvals: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut eigvecs = DenseMatrix::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        let col = v.column(j);
        let flip = col
            .iter()
            .find(|x| x.abs() > 1e-300)
            .map_or(1.0, |x| x.signum());
        for i in 0..n {
            eigvecs.set(i, slot, flip * col[i]);
        }
    }
    Ok((eigvals, eigvecs))
}

/// Solve `A x = b` for symmetric positive-definite `A` via Cholesky.
pub(crate) fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::dim("solve_spd shape".to_string()));
    }
    // Lower-triangular factor, row-major.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::DegenerateBasis(format!(
                        "non-positive pivot {s:.3e} at {i} in Cholesky"
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}
