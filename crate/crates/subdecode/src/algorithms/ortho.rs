//! Coded orthogonal iterations computing the leading invariant subspace:
//! multiple eigenvectors via column splitting, and right singular vectors of
//! a data matrix via row blocks and the Gram operator `B_j^T B_j`.
//!
//! The master keeps one cached result per block symbol. With acceleration the
//! post-QR rotation reorders eigenvector estimates, so the cache is rotated
//! by the same right factor before it is substituted next iteration.

use crate::algorithms::StepInfo;
use crate::codes::{decode_basis, GeneratorMatrix};
use crate::kernel::{qr_small, svd_small, DenseMatrix, SparseMatrix, DEFAULT_RANK_TOL};
use crate::splitting::{pad_system, plan_split, SplitPlan, SplitScheme};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

use super::power::BlockHolders;

/// The distributed block operator whose symbol results are being coded.
#[derive(Debug, Clone)]
pub enum OrthoOperator {
    /// `W_j = B_j X^j` with `B_j` the `j`-th column block of a symmetric
    /// system matrix; workers receive only their slice of `X`.
    ColumnSplit { blocks: Vec<SparseMatrix> },
    /// `W_j = B_j^T (B_j X)` with `B_j` the `j`-th row block of an `n x N`
    /// data matrix; `X` is broadcast whole and `B^T B` is never formed.
    GramRowSplit { blocks: Vec<SparseMatrix> },
}

/// Geometry of a coded orthogonal iteration.
#[derive(Debug, Clone)]
pub struct OrthoSystem {
    pub plan: SplitPlan,
    pub operator: OrthoOperator,
    /// Rows of the iterate `X` (padded for column splitting).
    pub iterate_rows: usize,
    /// Rows that carry data; everything above stays exactly zero.
    pub active_rows: usize,
    pub r: usize,
}

impl OrthoSystem {
    /// Column-split the symmetric matrix `m` into `k` blocks.
    pub fn column_split(m: &SparseMatrix, splits: usize, r: usize) -> Result<Self> {
        if m.n_rows() != m.n_cols() {
            return Err(Error::dim("column split needs a square matrix".to_string()));
        }
        let plan = plan_split(m.n_cols(), SplitScheme::Column, splits)?;
        let padded = pad_system(m, &plan);
        let blocks = (0..splits)
            .map(|j| {
                let range = plan.block_range(j);
                padded.slice_cols(range.start, range.end)
            })
            .collect();
        Ok(OrthoSystem {
            operator: OrthoOperator::ColumnSplit { blocks },
            iterate_rows: plan.padded_len(),
            active_rows: m.n_rows(),
            r,
            plan,
        })
    }

    /// Row-split the `n x N` data matrix into `k` blocks for the Gram
    /// operator.
    pub fn gram_row_split(data: &SparseMatrix, splits: usize, r: usize) -> Result<Self> {
        let plan = plan_split(data.n_rows(), SplitScheme::Row, splits)?;
        let padded = pad_system(data, &plan);
        let blocks = (0..splits)
            .map(|j| {
                let range = plan.block_range(j);
                padded.slice_rows(range.start, range.end)
            })
            .collect();
        Ok(OrthoSystem {
            operator: OrthoOperator::GramRowSplit { blocks },
            iterate_rows: data.n_cols(),
            active_rows: data.n_cols(),
            r,
            plan,
        })
    }

    pub fn splits(&self) -> usize {
        self.plan.splits
    }

    /// Fresh block symbol `W_j` for the current iterate.
    fn fresh_symbol(&self, j: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.operator {
            OrthoOperator::ColumnSplit { blocks } => {
                let range = self.plan.block_range(j);
                let xj = x.slice_rows(range.start, range.end);
                blocks[j].spmm(&xj)
            }
            OrthoOperator::GramRowSplit { blocks } => {
                let bx = blocks[j].spmm(x)?;
                blocks[j].spmm_transpose(&bx)
            }
        }
    }

    /// Seeded random orthonormal start (zero on padding rows).
    pub fn random_start(&self, rng: &mut impl Rng) -> Result<DenseMatrix> {
        let mut x = DenseMatrix::zeros(self.iterate_rows, self.r);
        for i in 0..self.active_rows {
            for j in 0..self.r {
                x.set(i, j, rng.sample(StandardNormal));
            }
        }
        let (q, _) = qr_small(&x)?;
        Ok(q)
    }

    pub fn initial_state(&self, x0: DenseMatrix) -> OrthoIterState {
        let zero = DenseMatrix::zeros(self.iterate_rows, self.r);
        OrthoIterState {
            x: x0,
            w_hat: vec![zero; self.splits()],
            t: 0,
        }
    }
}

/// Master state: the orthonormal iterate and the (already rotated) cached
/// block symbols.
#[derive(Debug, Clone)]
pub struct OrthoIterState {
    pub x: DenseMatrix,
    pub w_hat: Vec<DenseMatrix>,
    pub t: usize,
}

/// Step report: decoding stats, the decoded `Z_t`, and whether degenerate
/// directions were replaced by fresh random ones.
#[derive(Debug, Clone)]
pub struct OrthoStepInfo {
    pub base: StepInfo,
    pub z: DenseMatrix,
    pub restarted: bool,
}

/// One coded orthogonal-iteration step with substitute decoding.
pub fn ortho_step(
    system: &OrthoSystem,
    state: &OrthoIterState,
    gen: &GeneratorMatrix,
    survivors: &[usize],
    accelerate: bool,
    rng: &mut impl Rng,
) -> Result<(OrthoIterState, OrthoStepInfo)> {
    let k = system.splits();
    if gen.splits() != k {
        return Err(Error::dim("generator splits != plan splits".to_string()));
    }
    let fresh: Vec<DenseMatrix> = (0..k)
        .map(|j| system.fresh_symbol(j, &state.x))
        .collect::<Result<_>>()?;
    // Worker uploads: z_i = sum_j g_ij W_j.
    let received: Vec<DenseMatrix> = survivors
        .iter()
        .map(|&w| {
            let mut out = DenseMatrix::zeros(system.iterate_rows, system.r);
            for (j, &g) in gen.row(w).iter().enumerate() {
                if g != 0.0 {
                    out.add_scaled(g, &fresh[j]);
                }
            }
            out
        })
        .collect();
    let basis = decode_basis(&gen.restrict(survivors)?, DEFAULT_RANK_TOL)?;
    // Wbar V V^T recovered from the received symbols: right-multiply by
    // U D^{-1} V^T = L^T V^T.
    let recv_mix = basis.l().transpose().matmul(&basis.v().transpose())?; // s x k
    let p_vt = basis.complement_projector();
    let mut w_mix = Vec::with_capacity(k);
    for j in 0..k {
        let mut acc = DenseMatrix::zeros(system.iterate_rows, system.r);
        for (i, z) in received.iter().enumerate() {
            let c = recv_mix.get(i, j);
            if c != 0.0 {
                acc.add_scaled(c, z);
            }
        }
        for (l, w) in state.w_hat.iter().enumerate() {
            let c = p_vt.get(l, j);
            if c != 0.0 {
                acc.add_scaled(c, w);
            }
        }
        w_mix.push(acc);
    }
    let mut z = DenseMatrix::zeros(system.iterate_rows, system.r);
    for w in &w_mix {
        z.add_scaled(1.0, w);
    }

    let (x_next, w_hat_next, restarted) =
        orthonormalize_and_rotate(system, &z, w_mix, accelerate, rng)?;
    Ok((
        OrthoIterState {
            x: x_next,
            w_hat: w_hat_next,
            t: state.t + 1,
        },
        OrthoStepInfo {
            base: StepInfo::new(survivors.len(), basis.rank(), basis.delta()),
            z,
            restarted,
        },
    ))
}

/// Noiseless orthogonal iteration (every block fresh, no decoding).
pub fn ortho_noiseless_step(
    system: &OrthoSystem,
    state: &OrthoIterState,
    accelerate: bool,
    rng: &mut impl Rng,
) -> Result<(OrthoIterState, OrthoStepInfo)> {
    let k = system.splits();
    let fresh: Vec<DenseMatrix> = (0..k)
        .map(|j| system.fresh_symbol(j, &state.x))
        .collect::<Result<_>>()?;
    let mut z = DenseMatrix::zeros(system.iterate_rows, system.r);
    for w in &fresh {
        z.add_scaled(1.0, w);
    }
    let (x_next, w_hat_next, restarted) =
        orthonormalize_and_rotate(system, &z, fresh, accelerate, rng)?;
    Ok((
        OrthoIterState {
            x: x_next,
            w_hat: w_hat_next,
            t: state.t + 1,
        },
        OrthoStepInfo {
            base: StepInfo::new(gen_free_survivors(system), k, 0.0),
            z,
            restarted,
        },
    ))
}

fn gen_free_survivors(system: &OrthoSystem) -> usize {
    system.splits()
}

/// Baseline orthogonal iteration: per-block cached symbols, replaced when a
/// holder survives, carried (and rotated, when accelerating) otherwise.
pub fn ortho_baseline_step(
    system: &OrthoSystem,
    state: &OrthoIterState,
    holders: &BlockHolders,
    survivors: &[usize],
    accelerate: bool,
    rng: &mut impl Rng,
) -> Result<(OrthoIterState, OrthoStepInfo)> {
    let k = system.splits();
    if holders.splits() != k {
        return Err(Error::dim("holder map splits != plan splits".to_string()));
    }
    let avail = holders.available(survivors);
    let mut w_mix = Vec::with_capacity(k);
    for j in 0..k {
        if avail[j] {
            w_mix.push(system.fresh_symbol(j, &state.x)?);
        } else {
            w_mix.push(state.w_hat[j].clone());
        }
    }
    let mut z = DenseMatrix::zeros(system.iterate_rows, system.r);
    for w in &w_mix {
        z.add_scaled(1.0, w);
    }
    let missing = avail.iter().filter(|&&a| !a).count();
    let (x_next, w_hat_next, restarted) =
        orthonormalize_and_rotate(system, &z, w_mix, accelerate, rng)?;
    Ok((
        OrthoIterState {
            x: x_next,
            w_hat: w_hat_next,
            t: state.t + 1,
        },
        OrthoStepInfo {
            base: StepInfo::new(survivors.len(), k - missing, missing as f64 / k as f64),
            z,
            restarted,
        },
    ))
}

/// Shared tail of every step: orthonormalize `Z` into the next iterate and
/// apply the acceleration rotation to the cache.
///
/// Plain mode: `X' = Q` from the QR of `Z`. Accelerated mode: with
/// `R = S Lambda^(1/2) S~^T`, set `X' = Q S` (the eigenvector-ordered basis)
/// and rotate every cached symbol by `S~`. Numerically dependent directions
/// are replaced by fresh random ones and flagged.
fn orthonormalize_and_rotate(
    system: &OrthoSystem,
    z: &DenseMatrix,
    w_mix: Vec<DenseMatrix>,
    accelerate: bool,
    rng: &mut impl Rng,
) -> Result<(DenseMatrix, Vec<DenseMatrix>, bool)> {
    if !accelerate {
        let (x, restarted) = orthonormalize_robust(z, system.active_rows, rng);
        return Ok((x, w_mix, restarted));
    }
    match qr_small(z) {
        Ok((q, r_mat)) => {
            let svd = svd_small(&r_mat, DEFAULT_RANK_TOL)?;
            // R = S Lambda^(1/2) S~^T: S from u, S~ from vt.
            let s = &svd.u;
            let s_tilde_t = &svd.vt; // r x r, rows are right singular vectors
            let mut x = q.matmul(s)?;
            let sigma_max = svd.singular_values[0].max(f64::MIN_POSITIVE);
            let mut restarted = false;
            for (col, &sigma) in svd.singular_values.iter().enumerate() {
                if sigma <= DEFAULT_RANK_TOL * sigma_max {
                    replace_column_with_random(&mut x, col, system.active_rows, rng);
                    restarted = true;
                }
            }
            if restarted {
                let (fixed, _) = orthonormalize_robust(&x, system.active_rows, rng);
                x = fixed;
            }
            let s_tilde = s_tilde_t.transpose();
            let rotated = w_mix
                .into_iter()
                .map(|w| w.matmul(&s_tilde))
                .collect::<Result<Vec<_>>>()?;
            Ok((x, rotated, restarted))
        }
        Err(Error::DegenerateBasis(_)) => {
            let (x, _) = orthonormalize_robust(z, system.active_rows, rng);
            Ok((x, w_mix, true))
        }
        Err(e) => Err(e),
    }
}

fn replace_column_with_random(
    x: &mut DenseMatrix,
    col: usize,
    active_rows: usize,
    rng: &mut impl Rng,
) {
    for i in 0..x.n_rows() {
        let v = if i < active_rows {
            rng.sample(StandardNormal)
        } else {
            0.0
        };
        x.set(i, col, v);
    }
}

/// Modified Gram-Schmidt with re-orthogonalization; columns that collapse are
/// replaced with fresh random directions (restricted to the active rows).
fn orthonormalize_robust(
    z: &DenseMatrix,
    active_rows: usize,
    rng: &mut impl Rng,
) -> (DenseMatrix, bool) {
    let (n, r) = (z.n_rows(), z.n_cols());
    let scale = z.frobenius_norm().max(1.0);
    let mut q = z.clone();
    let mut restarted = false;
    for col in 0..r {
        let mut attempts = 0;
        loop {
            // Orthogonalize twice against the accepted columns.
            for _ in 0..2 {
                for prev in 0..col {
                    let mut dot = 0.0;
                    for i in 0..n {
                        dot += q.get(i, prev) * q.get(i, col);
                    }
                    for i in 0..n {
                        let v = q.get(i, col) - dot * q.get(i, prev);
                        q.set(i, col, v);
                    }
                }
            }
            let norm = {
                let mut s = 0.0;
                for i in 0..n {
                    s += q.get(i, col) * q.get(i, col);
                }
                s.sqrt()
            };
            if norm > 1e-12 * scale {
                for i in 0..n {
                    let v = q.get(i, col) / norm;
                    q.set(i, col, v);
                }
                break;
            }
            replace_column_with_random(&mut q, col, active_rows, rng);
            restarted = true;
            attempts += 1;
            assert!(attempts < 50, "could not rebuild an orthonormal basis");
        }
    }
    (q, restarted)
}

/// Reference invariant subspace by a long noiseless accelerated run.
pub fn reference_subspace(
    system: &OrthoSystem,
    seed_stream: &mut impl Rng,
    iterations: usize,
) -> Result<DenseMatrix> {
    let x0 = system.random_start(seed_stream)?;
    let mut state = system.initial_state(x0);
    for _ in 0..iterations {
        let (next, _) = ortho_noiseless_step(system, &state, true, seed_stream)?;
        state = next;
    }
    Ok(state.x)
}

/// Metric view of the iterate: the active rows only (orthonormal as long as
/// padding rows stay zero).
pub fn active_iterate(system: &OrthoSystem, x: &DenseMatrix) -> DenseMatrix {
    x.slice_rows(0, system.active_rows)
}

/// Convenience wrapper: plain noiseless orthogonal iteration from a given
/// start, mainly for tests.
pub fn run_noiseless(
    system: &OrthoSystem,
    x0: DenseMatrix,
    iterations: usize,
    accelerate: bool,
    rng: &mut impl Rng,
) -> Result<DenseMatrix> {
    let mut state = system.initial_state(x0);
    for _ in 0..iterations {
        let (next, _) = ortho_noiseless_step(system, &state, accelerate, rng)?;
        state = next;
    }
    Ok(state.x)
}

/// `self`-test helper shared with the harness: worst column-orthonormality
/// deviation of the iterate.
pub fn orthonormality_deviation(x: &DenseMatrix) -> f64 {
    x.gram_deviation()
}
