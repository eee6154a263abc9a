//! Coded power iterations `x <- B x + y` for row, column and SUMMA
//! splitting, their noiseless counterparts, and the uncoded / replication
//! baselines.

use crate::algorithms::StepInfo;
use crate::codes::{decode_basis, GeneratorMatrix, SparsityPattern};
use crate::kernel::{DenseMatrix, SparseMatrix, DEFAULT_RANK_TOL};
use crate::splitting::{mat_of, pad_system, pad_vector, plan_split, vec_of, SplitPlan, SplitScheme};
use crate::{Error, Result};

/// Master-side iterate for row-split power iterations.
#[derive(Debug, Clone)]
pub struct RowIterState {
    pub x: Vec<f64>,
    pub t: usize,
}

/// Fixed geometry for the row-split engines: the padded system and input.
#[derive(Debug, Clone)]
pub struct RowSystem {
    pub plan: SplitPlan,
    pub b: SparseMatrix,
    pub y: Vec<f64>,
}

impl RowSystem {
    pub fn new(b: &SparseMatrix, y: &[f64], splits: usize) -> Result<Self> {
        let plan = plan_split(b.n_rows(), SplitScheme::Row, splits)?;
        Ok(RowSystem {
            b: pad_system(b, &plan),
            y: pad_vector(y, &plan),
            plan,
        })
    }

    pub fn initial_state(&self, x0: &[f64]) -> RowIterState {
        RowIterState {
            x: pad_vector(x0, &self.plan),
            t: 0,
        }
    }

    fn compute_blocks(&self, x: &[f64]) -> Result<DenseMatrix> {
        let mut z = self.b.spmv(x)?;
        for (zv, yv) in z.iter_mut().zip(&self.y) {
            *zv += yv;
        }
        mat_of(&z, self.plan.block_size)
    }
}

/// One substitute-decoded iteration: surviving workers send their coded
/// combination of the fresh block results, the master projects onto the
/// surviving row space and carries the previous iterate on the complement.
pub fn power_row_step(
    system: &RowSystem,
    state: &RowIterState,
    gen: &GeneratorMatrix,
    survivors: &[usize],
) -> Result<(RowIterState, StepInfo)> {
    let k = system.plan.splits;
    if gen.splits() != k {
        return Err(Error::dim("generator splits != plan splits".to_string()));
    }
    let fresh = system.compute_blocks(&state.x)?; // k x b, rows are B_j x + y_j
    let received = encode_rows(gen, survivors, &fresh);
    let basis = decode_basis(&gen.restrict(survivors)?, DEFAULT_RANK_TOL)?;
    let side_info = mat_of(&state.x, system.plan.block_size)?;
    let next = basis.substitute(&received, &side_info)?;
    Ok((
        RowIterState {
            x: vec_of(&next),
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), basis.rank(), basis.delta()),
    ))
}

/// Worker-side encoding for row-style splitting: survivor `i` transmits
/// `sum_j g_ij (B_j x + y_j)`.
fn encode_rows(gen: &GeneratorMatrix, survivors: &[usize], fresh: &DenseMatrix) -> DenseMatrix {
    let b = fresh.n_cols();
    let mut received = DenseMatrix::zeros(survivors.len(), b);
    for (slot, &w) in survivors.iter().enumerate() {
        let out = received.row_mut(slot);
        for (j, &g) in gen.row(w).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (o, &f) in out.iter_mut().zip(fresh.row(j)) {
                *o += g * f;
            }
        }
    }
    received
}

/// Noiseless row-split iteration.
pub fn power_row_noiseless(system: &RowSystem, state: &RowIterState) -> Result<RowIterState> {
    let fresh = system.compute_blocks(&state.x)?;
    Ok(RowIterState {
        x: vec_of(&fresh),
        t: state.t + 1,
    })
}

/// Which workers hold which block under the baseline schemes.
#[derive(Debug, Clone)]
pub struct BlockHolders {
    /// `holders[j]` lists the workers storing block `j`.
    pub holders: Vec<Vec<usize>>,
}

impl BlockHolders {
    /// One block per worker.
    pub fn uncoded(workers: usize) -> Self {
        BlockHolders {
            holders: (0..workers).map(|w| vec![w]).collect(),
        }
    }

    /// `k` blocks replicated round-robin across `workers` (block `j` at
    /// workers `j, j+k, ...`).
    pub fn replicated(workers: usize, splits: usize) -> Self {
        let mut holders = vec![Vec::new(); splits];
        for w in 0..workers {
            holders[w % splits].push(w);
        }
        BlockHolders { holders }
    }

    /// Pattern-driven storage (same placement as the coded scheme).
    pub fn from_pattern(pattern: &SparsityPattern) -> Self {
        let mut holders = vec![Vec::new(); pattern.splits()];
        for w in 0..pattern.workers() {
            for j in pattern.row_support(w) {
                holders[j].push(w);
            }
        }
        BlockHolders { holders }
    }

    pub fn splits(&self) -> usize {
        self.holders.len()
    }

    /// Availability flags given this iteration's survivors.
    pub fn available(&self, survivors: &[usize]) -> Vec<bool> {
        self.holders
            .iter()
            .map(|h| h.iter().any(|w| survivors.binary_search(w).is_ok()))
            .collect()
    }
}

/// Baseline row-split iteration: available blocks are updated, the rest keep
/// the previous iterate ("maintain the unavailable rows").
pub fn power_row_baseline_step(
    system: &RowSystem,
    state: &RowIterState,
    holders: &BlockHolders,
    survivors: &[usize],
) -> Result<(RowIterState, StepInfo)> {
    let k = system.plan.splits;
    if holders.splits() != k {
        return Err(Error::dim("holder map splits != plan splits".to_string()));
    }
    let fresh = system.compute_blocks(&state.x)?;
    let avail = holders.available(survivors);
    let b = system.plan.block_size;
    let mut x = state.x.clone();
    for (j, &ok) in avail.iter().enumerate() {
        if ok {
            x[j * b..(j + 1) * b].copy_from_slice(fresh.row(j));
        }
    }
    let missing = avail.iter().filter(|&&a| !a).count();
    Ok((
        RowIterState { x, t: state.t + 1 },
        StepInfo::new(survivors.len(), k - missing, missing as f64 / k as f64),
    ))
}

/// Column-split master state: the iterate plus the cached per-block
/// estimates of `B_j x^j`.
#[derive(Debug, Clone)]
pub struct ColumnIterState {
    pub x: Vec<f64>,
    /// `u_hat[j]` estimates `B_j x_t^j`, each of padded length.
    pub u_hat: Vec<Vec<f64>>,
    pub t: usize,
}

/// Fixed geometry for column-split engines.
#[derive(Debug, Clone)]
pub struct ColumnSystem {
    pub plan: SplitPlan,
    pub blocks: Vec<SparseMatrix>,
    pub y: Vec<f64>,
}

impl ColumnSystem {
    pub fn new(b: &SparseMatrix, y: &[f64], splits: usize) -> Result<Self> {
        let plan = plan_split(b.n_cols(), SplitScheme::Column, splits)?;
        let padded = pad_system(b, &plan);
        let blocks = (0..splits)
            .map(|j| {
                let r = plan.block_range(j);
                padded.slice_cols(r.start, r.end)
            })
            .collect();
        Ok(ColumnSystem {
            blocks,
            y: pad_vector(y, &plan),
            plan,
        })
    }

    pub fn initial_state(&self, x0: &[f64]) -> ColumnIterState {
        let n = self.plan.padded_len();
        ColumnIterState {
            x: pad_vector(x0, &self.plan),
            u_hat: vec![vec![0.0; n]; self.plan.splits],
            t: 0,
        }
    }

    fn fresh_block_results(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.plan.splits)
            .map(|j| {
                let r = self.plan.block_range(j);
                self.blocks[j].spmv(&x[r])
            })
            .collect()
    }
}

/// One substitute-decoded column iteration. The iterate is produced by the
/// cheap right-multiplied path and the block-estimate cache by the full
/// projector update; the step reports their max deviation (they agree up to
/// round-off).
pub fn power_col_step(
    system: &ColumnSystem,
    state: &ColumnIterState,
    gen: &GeneratorMatrix,
    survivors: &[usize],
) -> Result<(ColumnIterState, StepInfo)> {
    let k = system.plan.splits;
    let n = system.plan.padded_len();
    if gen.splits() != k {
        return Err(Error::dim("generator splits != plan splits".to_string()));
    }
    let fresh = system.fresh_block_results(&state.x)?;
    // Worker uploads: w_i = sum_j g_ij B_j x^j.
    let received: Vec<Vec<f64>> = survivors
        .iter()
        .map(|&w| {
            let mut out = vec![0.0; n];
            for (j, &g) in gen.row(w).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                axpy(&mut out, g, &fresh[j]);
            }
            out
        })
        .collect();
    let basis = decode_basis(&gen.restrict(survivors)?, DEFAULT_RANK_TOL)?;
    let p_v = basis.projector();
    let p_vt = basis.complement_projector();

    // Cache update: u_hat' = [fresh] V V^T + [old] Vt Vt^T, column by column.
    let mut u_hat_next = vec![vec![0.0; n]; k];
    for (j, target) in u_hat_next.iter_mut().enumerate() {
        for l in 0..k {
            let c = p_v.get(l, j);
            if c != 0.0 {
                axpy(target, c, &fresh[l]);
            }
            let c = p_vt.get(l, j);
            if c != 0.0 {
                axpy(target, c, &state.u_hat[l]);
            }
        }
    }

    // Fast path for the iterate: x' = W_s (U D^-1 V^T 1) + old (Vt Vt^T 1) + y.
    let ones = vec![1.0; k];
    let vt_ones = basis.v().transpose().mat_vec(&ones)?; // rank
    let coef_recv = basis.l().transpose().mat_vec(&vt_ones)?; // survivors
    let coef_old = p_vt.mat_vec(&ones)?; // k
    let mut x_fast = system.y.clone();
    for (w, c) in received.iter().zip(&coef_recv) {
        axpy(&mut x_fast, *c, w);
    }
    for (u, c) in state.u_hat.iter().zip(&coef_old) {
        axpy(&mut x_fast, *c, u);
    }

    // Slow path via the cache, for the dual-path contract.
    let mut x_slow = system.y.clone();
    for u in &u_hat_next {
        axpy(&mut x_slow, 1.0, u);
    }
    let dual_diff = x_fast
        .iter()
        .zip(&x_slow)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    Ok((
        ColumnIterState {
            x: x_fast,
            u_hat: u_hat_next,
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), basis.rank(), basis.delta())
        .with_dual_path_diff(dual_diff),
    ))
}

/// Noiseless column-split iteration (block-wise sum).
pub fn power_col_noiseless(system: &ColumnSystem, state: &ColumnIterState) -> Result<ColumnIterState> {
    let fresh = system.fresh_block_results(&state.x)?;
    let mut x = system.y.clone();
    for u in &fresh {
        axpy(&mut x, 1.0, u);
    }
    Ok(ColumnIterState {
        x,
        u_hat: fresh,
        t: state.t + 1,
    })
}

/// Baseline column-split iteration: per-block cached results, replaced when
/// any holder survives and carried over otherwise.
pub fn power_col_baseline_step(
    system: &ColumnSystem,
    state: &ColumnIterState,
    holders: &BlockHolders,
    survivors: &[usize],
) -> Result<(ColumnIterState, StepInfo)> {
    let k = system.plan.splits;
    if holders.splits() != k {
        return Err(Error::dim("holder map splits != plan splits".to_string()));
    }
    let avail = holders.available(survivors);
    let mut u_hat_next = state.u_hat.clone();
    for (j, &ok) in avail.iter().enumerate() {
        if ok {
            let r = system.plan.block_range(j);
            u_hat_next[j] = system.blocks[j].spmv(&state.x[r])?;
        }
    }
    let mut x = system.y.clone();
    for u in &u_hat_next {
        axpy(&mut x, 1.0, u);
    }
    let missing = avail.iter().filter(|&&a| !a).count();
    Ok((
        ColumnIterState {
            x,
            u_hat: u_hat_next,
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), k - missing, missing as f64 / k as f64),
    ))
}

/// SUMMA master state: the iterate plus one cached strip estimate
/// `w_hat[j] ~ [B_{1j} x^j; ...; B_{gj} x^j]` per worker group.
#[derive(Debug, Clone)]
pub struct SummaIterState {
    pub x: Vec<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub t: usize,
}

/// Fixed geometry for SUMMA splitting: `k = g^2` square blocks, one worker
/// group per column strip, each group running a `(P/g, g)` row-style code.
#[derive(Debug, Clone)]
pub struct SummaSystem {
    pub plan: SplitPlan,
    /// `strips[j][i]` is the block `B_{ij}` (rows `i`, columns `j`).
    pub strips: Vec<Vec<SparseMatrix>>,
    pub y: Vec<f64>,
    pub group_workers: usize,
}

impl SummaSystem {
    pub fn new(b: &SparseMatrix, y: &[f64], splits: usize, group_workers: usize) -> Result<Self> {
        let plan = plan_split(b.n_rows(), SplitScheme::Summa, splits)?;
        let g = plan.side();
        if group_workers < g {
            return Err(Error::InvalidArgument(format!(
                "SUMMA group of {group_workers} workers cannot code {g} blocks"
            )));
        }
        let padded = pad_system(b, &plan);
        let strips = (0..g)
            .map(|j| {
                let cr = plan.block_range(j);
                let strip = padded.slice_cols(cr.start, cr.end);
                (0..g)
                    .map(|i| {
                        let rr = plan.block_range(i);
                        strip.slice_rows(rr.start, rr.end)
                    })
                    .collect()
            })
            .collect();
        Ok(SummaSystem {
            strips,
            y: pad_vector(y, &plan),
            plan,
            group_workers,
        })
    }

    pub fn side(&self) -> usize {
        self.plan.side()
    }

    pub fn total_workers(&self) -> usize {
        self.group_workers * self.side()
    }

    pub fn initial_state(&self, x0: &[f64]) -> SummaIterState {
        let n = self.plan.padded_len();
        SummaIterState {
            x: pad_vector(x0, &self.plan),
            w_hat: vec![vec![0.0; n]; self.side()],
            t: 0,
        }
    }

    /// Fresh strip results for group `j` as a `g x b` block matrix.
    fn fresh_strip(&self, j: usize, x: &[f64]) -> Result<DenseMatrix> {
        let r = self.plan.block_range(j);
        let xj = &x[r];
        let g = self.side();
        let b = self.plan.block_size;
        let mut out = DenseMatrix::zeros(g, b);
        for i in 0..g {
            let u = self.strips[j][i].spmv(xj)?;
            out.row_mut(i).copy_from_slice(&u);
        }
        Ok(out)
    }

    /// Split a global survivor list into per-group local indices.
    pub fn split_survivors(&self, survivors: &[usize]) -> Vec<Vec<usize>> {
        let mut per_group = vec![Vec::new(); self.side()];
        for &w in survivors {
            let group = w / self.group_workers;
            per_group[group].push(w % self.group_workers);
        }
        per_group
    }
}

/// One SUMMA iteration: each group decodes its strip with its own partial
/// generator (substituting from the cached strip estimate) and the master
/// sums the strip estimates.
pub fn power_summa_step(
    system: &SummaSystem,
    state: &SummaIterState,
    group_gens: &[GeneratorMatrix],
    survivors: &[usize],
) -> Result<(SummaIterState, StepInfo)> {
    let g = system.side();
    if group_gens.len() != g {
        return Err(Error::dim("one generator per group required".to_string()));
    }
    let per_group = system.split_survivors(survivors);
    let mut w_hat_next = Vec::with_capacity(g);
    let mut rank_total = 0usize;
    for j in 0..g {
        let fresh = system.fresh_strip(j, &state.x)?;
        let received = encode_rows(&group_gens[j], &per_group[j], &fresh);
        let basis = decode_basis(&group_gens[j].restrict(&per_group[j])?, DEFAULT_RANK_TOL)?;
        rank_total += basis.rank();
        let side_info = mat_of(&state.w_hat[j], system.plan.block_size)?;
        let decoded = basis.substitute(&received, &side_info)?;
        w_hat_next.push(vec_of(&decoded));
    }
    let mut x = system.y.clone();
    for w in &w_hat_next {
        axpy(&mut x, 1.0, w);
    }
    Ok((
        SummaIterState {
            x,
            w_hat: w_hat_next,
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), rank_total, 1.0 - rank_total as f64 / (g * g) as f64),
    ))
}

/// Noiseless SUMMA iteration.
pub fn power_summa_noiseless(system: &SummaSystem, state: &SummaIterState) -> Result<SummaIterState> {
    let g = system.side();
    let mut w_hat = Vec::with_capacity(g);
    for j in 0..g {
        w_hat.push(vec_of(&system.fresh_strip(j, &state.x)?));
    }
    let mut x = system.y.clone();
    for w in &w_hat {
        axpy(&mut x, 1.0, w);
    }
    Ok(SummaIterState {
        x,
        w_hat,
        t: state.t + 1,
    })
}

#[inline]
pub(crate) fn axpy(target: &mut [f64], alpha: f64, src: &[f64]) {
    for (t, &s) in target.iter_mut().zip(src) {
        *t += alpha * s;
    }
}
