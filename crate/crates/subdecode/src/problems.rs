//! Problem constructors and data generators: PageRank systems, shifted
//! normalized Laplacians, random graphs, planted-block matrices, least
//! squares, and SNAP-style edge-list ingestion.

use crate::kernel::{norm2, solve_spd, DenseMatrix, SparseMatrix};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;
use std::path::Path;

/// What to do with zero-out-degree (dangling) columns during normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DanglingMode {
    /// Leave the zero column in place; the damped iteration still contracts.
    #[default]
    Keep,
    /// Replace it with the uniform column `1/N` (classic PageRank patch; the
    /// column becomes dense).
    Uniform,
}

/// Scale every non-zero column to sum 1. Entries must be non-negative.
pub fn normalize_columns(a_raw: &SparseMatrix, dangling: DanglingMode) -> Result<SparseMatrix> {
    if a_raw.entries().any(|(_, _, v)| v < 0.0) {
        return Err(Error::InvalidArgument(
            "normalize_columns requires non-negative entries".to_string(),
        ));
    }
    let sums = a_raw.column_sums();
    let n = a_raw.n_rows();
    let mut triplets: Vec<(usize, usize, f64)> = a_raw
        .entries()
        .map(|(i, j, v)| (i, j, v / sums[j]))
        .collect();
    if dangling == DanglingMode::Uniform {
        let fill = 1.0 / n as f64;
        for (j, &s) in sums.iter().enumerate() {
            if s == 0.0 {
                triplets.extend((0..n).map(|i| (i, j, fill)));
            }
        }
    }
    SparseMatrix::from_triplets(a_raw.n_rows(), a_raw.n_cols(), triplets)
}

/// A damped linear system `x = y + B x` built from a column-normalized
/// adjacency matrix, together with its fixed point.
#[derive(Debug, Clone)]
pub struct PageRankProblem {
    pub a: SparseMatrix,
    pub damping: f64,
    pub r_pref: Vec<f64>,
    pub b: SparseMatrix,
    pub y: Vec<f64>,
    pub x_star: Vec<f64>,
}

/// Build the PageRank system `x = c r + (1-c) A x` and solve it to fixed
/// point by plain power iteration (the spectral radius is at most `1 - c`,
/// so this converges unconditionally).
pub fn build_pagerank(
    a_raw: &SparseMatrix,
    damping: f64,
    r_pref: Option<Vec<f64>>,
    dangling: DanglingMode,
) -> Result<PageRankProblem> {
    if !(0.0 < damping && damping < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping {damping} outside (0, 1)"
        )));
    }
    let n = a_raw.n_rows();
    if n != a_raw.n_cols() {
        return Err(Error::dim("PageRank needs a square adjacency".to_string()));
    }
    let a = normalize_columns(a_raw, dangling)?;
    let r_pref = r_pref.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    if r_pref.len() != n {
        return Err(Error::dim("preference vector length".to_string()));
    }
    let mut b = a.clone();
    b.scale(1.0 - damping);
    let y: Vec<f64> = r_pref.iter().map(|v| damping * v).collect();

    let mut x = y.clone();
    for _ in 0..200_000 {
        let mut next = b.spmv(&x)?;
        for (nx, yv) in next.iter_mut().zip(&y) {
            *nx += yv;
        }
        let diff = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        if diff < 1e-13 {
            break;
        }
    }
    Ok(PageRankProblem {
        a,
        damping,
        r_pref,
        b,
        y,
        x_star: x,
    })
}

/// How to treat isolated (degree-zero) nodes when forming `D^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IsolateMode {
    /// Reject graphs with isolated nodes.
    #[default]
    Reject,
    /// Drop isolated nodes before building the Laplacian.
    Drop,
}

/// Symmetric matrix to iterate for spectral embeddings: the top eigenvectors
/// of `I + D^{-1/2} A D^{-1/2}` are the bottom eigenvectors of the
/// normalized Laplacian, and the spectrum lives in `[0, 2]`.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub m: SparseMatrix,
    pub r: usize,
}

pub fn build_shifted_laplacian(
    adjacency: &SparseMatrix,
    r: usize,
    isolate: IsolateMode,
) -> Result<SpectralProblem> {
    let n = adjacency.n_rows();
    if n != adjacency.n_cols() {
        return Err(Error::dim("adjacency must be square".to_string()));
    }
    let dev = adjacency.max_symmetry_deviation();
    if dev > 1e-10 {
        return Err(Error::Asymmetric { deviation: dev });
    }
    let mut degree = vec![0.0f64; n];
    for (i, _, v) in adjacency.entries() {
        degree[i] += v;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    if keep.len() != n && isolate == IsolateMode::Reject {
        return Err(Error::InvalidArgument(format!(
            "{} isolated nodes (use drop mode or clean the graph)",
            n - keep.len()
        )));
    }
    let index_of: Vec<Option<usize>> = {
        let mut map = vec![None; n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = Some(new);
        }
        map
    };
    let m = keep.len();
    let mut triplets: Vec<(usize, usize, f64)> = (0..m).map(|i| (i, i, 1.0)).collect();
    for (i, j, v) in adjacency.entries() {
        if let (Some(ni), Some(nj)) = (index_of[i], index_of[j]) {
            triplets.push((ni, nj, v / (degree[i] * degree[j]).sqrt()));
        }
    }
    Ok(SpectralProblem {
        m: SparseMatrix::from_triplets(m, m, triplets)?,
        r,
    })
}

/// Erdos-Renyi G(n, p): each unordered pair is an edge independently with
/// probability `p`. Sampled by geometric skips, so sparse graphs cost
/// O(edges).
pub fn gen_er(n: usize, p: f64, rng: &mut impl Rng) -> Result<SparseMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p {p} outside [0, 1]")));
    }
    let mut triplets = Vec::new();
    let mut push_edge = |i: usize, j: usize| {
        triplets.push((i, j, 1.0));
        triplets.push((j, i, 1.0));
    };
    if p >= 1.0 {
        for i in 0..n {
            for j in (i + 1)..n {
                push_edge(i, j);
            }
        }
    } else if p > 0.0 {
        let total: u64 = (n as u64) * (n as u64 - 1) / 2;
        let log_q = (1.0 - p).ln();
        let mut pos: u64 = 0;
        loop {
            let u: f64 = rng.random::<f64>();
            let skip = ((1.0 - u).ln() / log_q).floor() as u64;
            pos = pos.saturating_add(skip).saturating_add(1);
            if pos > total {
                break;
            }
            let (i, j) = pair_from_index(pos - 1, n);
            push_edge(i, j);
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Map a linear index to the (i, j) pair with i < j, lexicographic in i.
fn pair_from_index(mut idx: u64, n: usize) -> (usize, usize) {
    for i in 0..n {
        let row_len = (n - i - 1) as u64;
        if idx < row_len {
            return (i, i + 1 + idx as usize);
        }
        idx -= row_len;
    }
    unreachable!("index out of range")
}

/// Two-cluster stochastic block model; returns the adjacency and the planted
/// labels (0 for the first half, 1 for the second).
pub fn gen_sbm(
    n: usize,
    p_in: f64,
    p_out: f64,
    rng: &mut impl Rng,
) -> Result<(SparseMatrix, Vec<usize>)> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
    }
    let half = n / 2;
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= half)).collect();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, n, triplets)?, labels))
}

/// Sparse background matrix with planted dense diagonal blocks; non-zero
/// values are uniform in `[0, 1]`. Blocks are `(size, density)` pairs placed
/// consecutively from the top-left corner.
pub fn gen_planted(
    n: usize,
    p_bg: f64,
    blocks: &[(usize, f64)],
    rng: &mut impl Rng,
) -> Result<SparseMatrix> {
    let total: usize = blocks.iter().map(|(s, _)| s).sum();
    if total > n {
        return Err(Error::InvalidArgument(format!(
            "planted blocks cover {total} rows, matrix has {n}"
        )));
    }
    // Planted regions override the background density.
    let mut region = vec![usize::MAX; n];
    let mut offset = 0usize;
    for (idx, &(size, _)) in blocks.iter().enumerate() {
        for r in region.iter_mut().skip(offset).take(size) {
            *r = idx;
        }
        offset += size;
    }
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = if region[i] != usize::MAX && region[i] == region[j] {
                blocks[region[i]].1
            } else {
                p_bg
            };
            if rng.random::<f64>() < p {
                triplets.push((i, j, rng.random::<f64>()));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Parse a whitespace-separated `src dst` edge list (SNAP style): `#` lines
/// are comments, node ids are compacted to `0..N-1` in sorted order, edges
/// are directed.
pub fn parse_edge_list(text: &str) -> Result<SparseMatrix> {
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>, lineno: usize| -> Result<u64> {
            tok.ok_or_else(|| Error::Parse {
                line: lineno + 1,
                reason: "expected two node ids".to_string(),
            })?
            .parse::<u64>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                reason: format!("bad node id: {e}"),
            })
        };
        let src = parse(parts.next(), lineno)?;
        let dst = parse(parts.next(), lineno)?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                reason: "trailing tokens after edge".to_string(),
            });
        }
        ids.insert(src);
        ids.insert(dst);
        edges.push((src, dst));
    }
    if edges.is_empty() {
        return Err(Error::Parse {
            line: 0,
            reason: "no edges in file".to_string(),
        });
    }
    let index: std::collections::BTreeMap<u64, usize> =
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect();
    let n = index.len();
    let triplets = edges
        .into_iter()
        .map(|(s, d)| (index[&s], index[&d], 1.0));
    SparseMatrix::from_triplets(n, n, triplets)
}

pub fn load_edge_list(path: &Path) -> Result<SparseMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_edge_list(&text)
}

/// Emit an adjacency matrix as a `src dst` edge list (one line per stored
/// entry).
pub fn write_edge_list(adj: &SparseMatrix) -> String {
    let mut out = String::new();
    for (i, j, _) in adj.entries() {
        out.push_str(&format!("{i} {j}\n"));
    }
    out
}

/// Least-squares instance `min_x ||y - A x||` with its normal-equation
/// solution kept for metrics.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    pub a_data: DenseMatrix,
    pub y_obs: Vec<f64>,
    pub x_star: Vec<f64>,
}

impl LeastSquaresProblem {
    /// `f(x) = ||A x - y||^2 / (2 n)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.a_data.n_rows() as f64;
        let ax = self.a_data.mat_vec(x).expect("dimension");
        ax.iter()
            .zip(&self.y_obs)
            .map(|(a, y)| (a - y) * (a - y))
            .sum::<f64>()
            / (2.0 * n)
    }

    /// Gradient `A^T (A x - y) / n`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.a_data.n_rows() as f64;
        let mut resid = self.a_data.mat_vec(x).expect("dimension");
        for (r, y) in resid.iter_mut().zip(&self.y_obs) {
            *r -= y;
        }
        let mut g = self.a_data.transpose().mat_vec(&resid).expect("dimension");
        for v in &mut g {
            *v /= n;
        }
        g
    }

    /// Largest eigenvalue of `A^T A / n` (smoothness constant), by power
    /// iteration on the Gram operator.
    pub fn lipschitz(&self) -> f64 {
        let n = self.a_data.n_rows() as f64;
        let dim = self.a_data.n_cols();
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut lambda = 0.0;
        for _ in 0..300 {
            let av = self.a_data.mat_vec(&v).expect("dimension");
            let mut atav = self.a_data.transpose().mat_vec(&av).expect("dimension");
            for x in &mut atav {
                *x /= n;
            }
            let norm = norm2(&atav);
            if norm == 0.0 {
                return 0.0;
            }
            for x in &mut atav {
                *x /= norm;
            }
            let prev = lambda;
            lambda = norm;
            v = atav;
            if (lambda - prev).abs() <= 1e-12 * lambda {
                break;
            }
        }
        lambda
    }
}

/// Problem from a given data matrix and observations.
pub fn least_squares_from_parts(a_data: DenseMatrix, y_obs: Vec<f64>) -> Result<LeastSquaresProblem> {
    let (n, dim) = (a_data.n_rows(), a_data.n_cols());
    if y_obs.len() != n {
        return Err(Error::dim("observation length".to_string()));
    }
    if n < dim {
        return Err(Error::InvalidArgument(format!(
            "need rows >= cols for a unique solution, got {n}x{dim}"
        )));
    }
    // Normal equations (A^T A) x = A^T y via Cholesky.
    let at = a_data.transpose();
    let gram = at.matmul(&a_data)?;
    let rhs = at.mat_vec(&y_obs)?;
    let x_star = solve_spd(&gram, &rhs)?;
    Ok(LeastSquaresProblem {
        a_data,
        y_obs,
        x_star,
    })
}

/// Random Gaussian least-squares instance.
pub fn build_least_squares(n: usize, dim: usize, rng: &mut impl Rng) -> Result<LeastSquaresProblem> {
    let a = DenseMatrix::from_fn(n, dim, |_, _| rng.sample(StandardNormal));
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    least_squares_from_parts(a, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::symeig_small;
    use crate::seeding::stream;

    #[test]
    fn normalize_columns_basics() {
        let a = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 2.0), (1, 0, 2.0)]).unwrap();
        let norm = normalize_columns(&a, DanglingMode::Keep).unwrap();
        assert_eq!(norm.to_dense().get(0, 0), 0.5);
        assert_eq!(norm.to_dense().get(1, 0), 0.5);
        // Dangling columns kept as zero.
        assert_eq!(norm.column_sums()[1], 0.0);
        let uniform = normalize_columns(&a, DanglingMode::Uniform).unwrap();
        assert!((uniform.column_sums()[1] - 1.0).abs() < 1e-12);
        let neg = SparseMatrix::from_triplets(2, 2, vec![(0, 0, -1.0)]).unwrap();
        assert!(normalize_columns(&neg, DanglingMode::Keep).is_err());
    }

    #[test]
    fn normalize_columns_random_sums() {
        let mut rng = stream(5);
        let a = gen_er(50, 0.2, &mut rng).unwrap();
        let norm = normalize_columns(&a, DanglingMode::Keep).unwrap();
        for s in norm.column_sums() {
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pagerank_self_loops_uniform_fixed_point() {
        let a = SparseMatrix::identity(4);
        let p = build_pagerank(&a, 0.15, None, DanglingMode::Keep).unwrap();
        for &x in &p.x_star {
            assert!((x - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn pagerank_two_cycle_uniform() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let p = build_pagerank(&a, 0.15, None, DanglingMode::Keep).unwrap();
        assert!((p.x_star[0] - 0.5).abs() < 1e-10);
        assert!((p.x_star[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pagerank_chain_matches_direct_solve() {
        // 3-node chain 0 -> 1 -> 2 with a back edge 2 -> 0.
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)],
        )
        .unwrap();
        let p = build_pagerank(&a, 0.15, None, DanglingMode::Keep).unwrap();
        // Independent oracle: dense Gaussian elimination on (I - B) x = y.
        let n = 3;
        let b = p.b.to_dense();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| if i == j { 1.0 } else { 0.0 } - b.get(i, j))
                    .collect();
                row.push(p.y[i]);
                row
            })
            .collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, pivot);
            let pv = aug[col][col];
            for j in col..=n {
                aug[col][j] /= pv;
            }
            for row in 0..n {
                if row != col {
                    let f = aug[row][col];
                    for j in col..=n {
                        aug[row][j] -= f * aug[col][j];
                    }
                }
            }
        }
        for i in 0..n {
            assert!((p.x_star[i] - aug[i][n]).abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_laplacian_two_disconnected_edges() {
        let adj = SparseMatrix::from_triplets(
            4,
            4,
            vec![(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let sp = build_shifted_laplacian(&adj, 2, IsolateMode::Reject).unwrap();
        let (vals, _) = symeig_small(&sp.m.to_dense()).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-10);
        assert!((vals[1] - 2.0).abs() < 1e-10);
        assert!(vals[2].abs() < 1e-10);
    }

    #[test]
    fn shifted_laplacian_triangle_spectrum() {
        let adj = SparseMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 1, 1.0),
                (1, 0, 1.0),
                (0, 2, 1.0),
                (2, 0, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
            ],
        )
        .unwrap();
        let sp = build_shifted_laplacian(&adj, 1, IsolateMode::Reject).unwrap();
        let (vals, _) = symeig_small(&sp.m.to_dense()).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-10);
        assert!((vals[1] - 0.5).abs() < 1e-10);
        assert!((vals[2] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn shifted_laplacian_spectrum_in_range() {
        let mut rng = stream(11);
        let adj = gen_er(40, 0.3, &mut rng).unwrap();
        let sp = build_shifted_laplacian(&adj, 2, IsolateMode::Drop).unwrap();
        let (vals, _) = symeig_small(&sp.m.to_dense()).unwrap();
        for v in vals {
            assert!((-1e-9..=2.0 + 1e-9).contains(&v), "eigenvalue {v}");
        }
    }

    #[test]
    fn shifted_laplacian_rejects_isolated() {
        let adj = SparseMatrix::from_triplets(3, 3, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(build_shifted_laplacian(&adj, 1, IsolateMode::Reject).is_err());
        let dropped = build_shifted_laplacian(&adj, 1, IsolateMode::Drop).unwrap();
        assert_eq!(dropped.m.n_rows(), 2);
    }

    #[test]
    fn er_extremes() {
        let mut rng = stream(13);
        let empty = gen_er(5, 0.0, &mut rng).unwrap();
        assert_eq!(empty.nnz(), 0);
        let full = gen_er(4, 1.0, &mut rng).unwrap();
        assert_eq!(full.nnz(), 12); // 6 undirected edges
    }

    #[test]
    fn er_edge_count_concentrates() {
        let mut rng = stream(17);
        let n = 400;
        let p = 0.05;
        let g = gen_er(n, p, &mut rng).unwrap();
        let edges = g.nnz() as f64 / 2.0;
        let expect = (n * (n - 1) / 2) as f64 * p;
        let sd = (expect * (1.0 - p)).sqrt();
        assert!((edges - expect).abs() < 4.0 * sd, "edges {edges} vs {expect}");
        assert_eq!(g.max_symmetry_deviation(), 0.0);
    }

    #[test]
    fn sbm_degree_moments() {
        let mut rng = stream(19);
        let n = 1000;
        let (g, labels) = gen_sbm(n, 0.02, 0.003, &mut rng).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 500);
        // Mean intra-cluster degree close to p_in * (n/2).
        let mut intra = 0usize;
        for (i, j, _) in g.entries() {
            if labels[i] == labels[j] {
                intra += 1;
            }
        }
        let mean_intra = intra as f64 / n as f64;
        let expect = 0.02 * (n as f64 / 2.0 - 1.0);
        let sd = (expect / n as f64).sqrt() * 3.0 + 0.5;
        assert!(
            (mean_intra - expect).abs() < sd.max(1.0),
            "mean intra degree {mean_intra} vs {expect}"
        );
    }

    #[test]
    fn planted_blocks_are_denser() {
        let mut rng = stream(23);
        let m = gen_planted(200, 0.01, &[(50, 0.2)], &mut rng).unwrap();
        let dense = m.to_dense();
        let block_nnz = (0..50)
            .flat_map(|i| (0..50).map(move |j| (i, j)))
            .filter(|&(i, j)| dense.get(i, j) != 0.0)
            .count();
        let bg_nnz = (50..200)
            .flat_map(|i| (50..200).map(move |j| (i, j)))
            .filter(|&(i, j)| dense.get(i, j) != 0.0)
            .count();
        let block_density = block_nnz as f64 / 2500.0;
        let bg_density = bg_nnz as f64 / 22500.0;
        assert!(block_density > 0.15, "block density {block_density}");
        assert!(bg_density < 0.03, "background density {bg_density}");
        for (_, _, v) in m.entries() {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(gen_planted(40, 0.0, &[(50, 0.2)], &mut rng).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let adj = parse_edge_list("0 1\n1 0\n").unwrap();
        assert_eq!(adj.n_rows(), 2);
        assert_eq!(adj.nnz(), 2);
        let adj = parse_edge_list("# comment\n3 5\n").unwrap();
        assert_eq!(adj.n_rows(), 2);
        assert_eq!(adj.to_dense().get(0, 1), 1.0);
        assert!(parse_edge_list("1 x\n").is_err());
        assert!(parse_edge_list("# nothing\n").is_err());
        match parse_edge_list("0 1\n2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let mut rng = stream(29);
        let g = gen_er(30, 0.2, &mut rng).unwrap();
        let text = write_edge_list(&g);
        let back = parse_edge_list(&text).unwrap();
        // Compaction drops isolated nodes; compare on non-isolated ones.
        let degree: Vec<usize> = {
            let mut d = vec![0usize; g.n_rows()];
            for (i, _, _) in g.entries() {
                d[i] += 1;
            }
            d
        };
        let keep: Vec<usize> = (0..g.n_rows()).filter(|&i| degree[i] > 0).collect();
        assert_eq!(back.n_rows(), keep.len());
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (new_j, &old_j) in keep.iter().enumerate() {
                assert_eq!(
                    back.to_dense().get(new_i, new_j),
                    g.to_dense().get(old_i, old_j)
                );
            }
        }
    }

    #[test]
    fn least_squares_identity_data() {
        let a = DenseMatrix::identity(4);
        let y = vec![1.0, -2.0, 3.0, 0.5];
        let p = least_squares_from_parts(a, y.clone()).unwrap();
        for (x, want) in p.x_star.iter().zip(&y) {
            assert!((x - want).abs() < 1e-10);
        }
    }

    #[test]
    fn least_squares_optimality() {
        let mut rng = stream(31);
        let p = build_least_squares(60, 10, &mut rng).unwrap();
        let g = p.gradient(&p.x_star);
        let scale = norm2(&p.gradient(&[0.0; 10]));
        assert!(norm2(&g) < 1e-8 * scale.max(1.0), "gradient norm {}", norm2(&g));
        // Objective at the solution is no worse than at zero.
        assert!(p.objective(&p.x_star) <= p.objective(&[0.0; 10]));
    }

    #[test]
    fn lipschitz_matches_dense_eig() {
        let mut rng = stream(37);
        let p = build_least_squares(30, 6, &mut rng).unwrap();
        let at = p.a_data.transpose();
        let mut gram = at.matmul(&p.a_data).unwrap();
        gram.scale(1.0 / 30.0);
        let (vals, _) = symeig_small(&gram).unwrap();
        assert!((p.lipschitz() - vals[0]).abs() < 1e-8 * vals[0]);
    }
}
