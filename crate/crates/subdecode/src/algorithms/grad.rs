//! Coded gradient descent: the dataset is split into `k` subsets placed by
//! the sparsity pattern, workers upload Gaussian combinations of their
//! partial gradients, and the master substitute-decodes a full set of
//! per-subset gradient estimates before taking the step. Also the uncoded,
//! replication and fractional-repetition approximate-gradient-coding
//! baselines.

use crate::algorithms::power::BlockHolders;
use crate::algorithms::StepInfo;
use crate::codes::{decode_basis, GeneratorMatrix};
use crate::kernel::{DenseMatrix, DEFAULT_RANK_TOL};
use crate::problems::LeastSquaresProblem;
use crate::{Error, Result};

/// A dataset partitioned into `k` disjoint subsets with per-subset gradients
/// that sum to the full gradient.
pub trait PartialGradients {
    fn dim(&self) -> usize;
    fn n_subsets(&self) -> usize;
    fn partial_gradient(&self, subset: usize, x: &[f64]) -> Vec<f64>;
}

/// Least squares `min ||y - A x||` row-split into `k` subsets;
/// the partial gradient of subset `j` is `A_j^T (A_j x - y_j) / n`.
pub struct SplitLeastSquares<'a> {
    problem: &'a LeastSquaresProblem,
    ranges: Vec<std::ops::Range<usize>>,
}

impl<'a> SplitLeastSquares<'a> {
    pub fn new(problem: &'a LeastSquaresProblem, splits: usize) -> Result<Self> {
        let n = problem.a_data.n_rows();
        if splits == 0 || splits > n {
            return Err(Error::InvalidArgument(format!(
                "cannot split {n} rows into {splits} subsets"
            )));
        }
        let per = n.div_ceil(splits);
        let ranges = (0..splits)
            .map(|j| (j * per).min(n)..((j + 1) * per).min(n))
            .collect();
        Ok(SplitLeastSquares { problem, ranges })
    }
}

impl PartialGradients for SplitLeastSquares<'_> {
    fn dim(&self) -> usize {
        self.problem.a_data.n_cols()
    }

    fn n_subsets(&self) -> usize {
        self.ranges.len()
    }

    fn partial_gradient(&self, subset: usize, x: &[f64]) -> Vec<f64> {
        let range = self.ranges[subset].clone();
        let n = self.problem.a_data.n_rows() as f64;
        let dim = self.dim();
        let mut g = vec![0.0; dim];
        for row in range {
            let a_row = self.problem.a_data.row(row);
            let resid = crate::kernel::dot(a_row, x) - self.problem.y_obs[row];
            for (gv, &av) in g.iter_mut().zip(a_row) {
                *gv += resid * av;
            }
        }
        for gv in &mut g {
            *gv /= n;
        }
        g
    }
}

/// Parameter iterate plus the cached per-subset gradient estimates.
#[derive(Debug, Clone)]
pub struct GradIterState {
    pub x: Vec<f64>,
    /// Row `j` estimates the subset-`j` partial gradient.
    pub w_hat: DenseMatrix,
    pub t: usize,
}

impl GradIterState {
    pub fn start(dim: usize, splits: usize) -> Self {
        GradIterState {
            x: vec![0.0; dim],
            w_hat: DenseMatrix::zeros(splits, dim),
            t: 0,
        }
    }
}

fn fresh_gradients(problem: &impl PartialGradients, x: &[f64]) -> DenseMatrix {
    let k = problem.n_subsets();
    let dim = problem.dim();
    let mut fresh = DenseMatrix::zeros(k, dim);
    for j in 0..k {
        fresh.row_mut(j).copy_from_slice(&problem.partial_gradient(j, x));
    }
    fresh
}

fn descend(x: &[f64], w_hat: &DenseMatrix, step_size: f64) -> Vec<f64> {
    let mut next = x.to_vec();
    for j in 0..w_hat.n_rows() {
        for (nx, &g) in next.iter_mut().zip(w_hat.row(j)) {
            *nx -= step_size * g;
        }
    }
    next
}

/// One substitute-decoded gradient step.
pub fn grad_coded_step(
    problem: &impl PartialGradients,
    state: &GradIterState,
    gen: &GeneratorMatrix,
    survivors: &[usize],
    step_size: f64,
) -> Result<(GradIterState, StepInfo)> {
    let k = problem.n_subsets();
    if gen.splits() != k {
        return Err(Error::dim("generator splits != subset count".to_string()));
    }
    let fresh = fresh_gradients(problem, &state.x);
    // Worker uploads: z_i = sum_j g_ij w_j.
    let mut received = DenseMatrix::zeros(survivors.len(), problem.dim());
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
    let basis = decode_basis(&gen.restrict(survivors)?, DEFAULT_RANK_TOL)?;
    let w_hat = basis.substitute(&received, &state.w_hat)?;
    let x = descend(&state.x, &w_hat, step_size);
    Ok((
        GradIterState {
            x,
            w_hat,
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), basis.rank(), basis.delta()),
    ))
}

/// Exact full-batch step.
pub fn grad_noiseless_step(
    problem: &impl PartialGradients,
    state: &GradIterState,
    step_size: f64,
) -> Result<(GradIterState, StepInfo)> {
    let fresh = fresh_gradients(problem, &state.x);
    let x = descend(&state.x, &fresh, step_size);
    let k = problem.n_subsets();
    Ok((
        GradIterState {
            x,
            w_hat: fresh,
            t: state.t + 1,
        },
        StepInfo::new(k, k, 0.0),
    ))
}

/// Uncoded / replication baselines: aggregate the partial gradients whose
/// holders responded, skip the rest.
pub fn grad_baseline_step(
    problem: &impl PartialGradients,
    state: &GradIterState,
    holders: &BlockHolders,
    survivors: &[usize],
    step_size: f64,
) -> Result<(GradIterState, StepInfo)> {
    let k = problem.n_subsets();
    if holders.splits() != k {
        return Err(Error::dim("holder map splits != subset count".to_string()));
    }
    let avail = holders.available(survivors);
    let mut used = DenseMatrix::zeros(k, problem.dim());
    for (j, &ok) in avail.iter().enumerate() {
        if ok {
            used.row_mut(j)
                .copy_from_slice(&problem.partial_gradient(j, &state.x));
        }
    }
    let x = descend(&state.x, &used, step_size);
    let missing = avail.iter().filter(|&&a| !a).count();
    Ok((
        GradIterState {
            x,
            w_hat: used,
            t: state.t + 1,
        },
        StepInfo::new(survivors.len(), k - missing, missing as f64 / k as f64),
    ))
}

/// Fractional-repetition approximate gradient coding: subsets are paired,
/// each pair is computed at `P / (k/2)` workers, every worker transmits the
/// **sum** of its two partial gradients, and the master adds one surviving
/// representative per pair (duplicates count once). With no erasures this is
/// the exact full gradient.
pub struct FractionalRepetition {
    /// `groups[g]` lists the workers serving pair `g = {2g, 2g+1}`.
    pub groups: Vec<Vec<usize>>,
}

impl FractionalRepetition {
    pub fn new(workers: usize, splits: usize) -> Result<Self> {
        if !splits.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "fractional repetition pairs subsets, got odd k = {splits}"
            )));
        }
        let n_groups = splits / 2;
        if !workers.is_multiple_of(n_groups) {
            return Err(Error::InvalidArgument(format!(
                "{workers} workers not divisible into {n_groups} pair groups"
            )));
        }
        let per = workers / n_groups;
        let groups = (0..n_groups)
            .map(|g| (g * per..(g + 1) * per).collect())
            .collect();
        Ok(FractionalRepetition { groups })
    }
}

pub fn grad_fractional_repetition_step(
    problem: &impl PartialGradients,
    state: &GradIterState,
    fr: &FractionalRepetition,
    survivors: &[usize],
    step_size: f64,
) -> Result<(GradIterState, StepInfo)> {
    let k = problem.n_subsets();
    if fr.groups.len() * 2 != k {
        return Err(Error::dim("pair groups != k/2".to_string()));
    }
    let mut used = DenseMatrix::zeros(k, problem.dim());
    let mut missing_groups = 0usize;
    for (g, members) in fr.groups.iter().enumerate() {
        let alive = members
            .iter()
            .any(|w| survivors.binary_search(w).is_ok());
        if alive {
            for subset in [2 * g, 2 * g + 1] {
                used.row_mut(subset)
                    .copy_from_slice(&problem.partial_gradient(subset, &state.x));
            }
        } else {
            missing_groups += 1;
        }
    }
    let x = descend(&state.x, &used, step_size);
    let n_groups = fr.groups.len();
    Ok((
        GradIterState {
            x,
            w_hat: used,
            t: state.t + 1,
        },
        StepInfo::new(
            survivors.len(),
            n_groups - missing_groups,
            missing_groups as f64 / n_groups as f64,
        ),
    ))
}
