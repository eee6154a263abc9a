//! Deterministic master/worker simulation: erasure drawing, per-iteration
//! orchestration, communication-cost accounting and metric tracing.
//!
//! Seed derivation is hierarchical: `run = mix(master, run_index)`, then
//! per-iteration `mix(run, t)` split into a `"gen"` stream (generator values)
//! and an `"erase"` stream (failures). Code randomness and failure randomness
//! never share a stream, matching the independence the analysis assumes.

use crate::seeding::{mix, stream, tag};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// How workers fail each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErasureKind {
    /// Exactly `round(epsilon * P)` workers erased, uniformly at random.
    FixedFraction,
    /// Each worker erased independently with probability `epsilon`.
    Bernoulli,
}

/// Per-iteration worker failure model. Draws are independent across
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasureModel {
    pub kind: ErasureKind,
    pub epsilon: f64,
}

impl ErasureModel {
    pub fn fixed_fraction(epsilon: f64) -> Result<Self> {
        Self::new(ErasureKind::FixedFraction, epsilon)
    }

    pub fn bernoulli(epsilon: f64) -> Result<Self> {
        Self::new(ErasureKind::Bernoulli, epsilon)
    }

    pub fn new(kind: ErasureKind, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!(
                "erasure fraction {epsilon} outside [0, 1]"
            )));
        }
        Ok(ErasureModel { kind, epsilon })
    }

    /// Sorted indices of the workers that respond this iteration.
    pub fn draw_survivors(&self, workers: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let mut survivors: Vec<usize> = match self.kind {
            ErasureKind::FixedFraction => {
                let n_erased = (self.epsilon * workers as f64).round() as usize;
                let n_erased = n_erased.min(workers);
                let mut erased = vec![false; workers];
                for idx in rand::seq::index::sample(rng, workers, n_erased) {
                    erased[idx] = true;
                }
                (0..workers).filter(|&w| !erased[w]).collect()
            }
            ErasureKind::Bernoulli => (0..workers)
                .filter(|_| rng.random::<f64>() >= self.epsilon)
                .collect(),
        };
        survivors.sort_unstable();
        Ok(survivors)
    }
}

/// One record per completed iteration (plus the initial state at `t = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Scheme-specific error metric: `||x_t - x*||_2`, subspace distance, or
    /// excess objective.
    pub error: f64,
    /// Cumulative per-worker communication in transmitted reals.
    pub comm_cost: f64,
    pub survivors: usize,
    /// Realised `1 - rank/k` of this iteration's decoding (unavailable-block
    /// fraction for the uncoded/replication baselines, 0 when noiseless).
    pub delta: f64,
}

/// Metric trace of a single run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTrace {
    pub records: Vec<TraceRecord>,
}

impl MetricsTrace {
    pub fn push(&mut self, record: TraceRecord) {
        debug_assert_eq!(record.iteration, self.records.len());
        if let Some(last) = self.records.last() {
            debug_assert!(record.comm_cost > last.comm_cost);
        }
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.error)
    }
}

/// Pointwise mean trace over runs. The communication schedule is
/// deterministic, so it is taken from the first trace; errors and deltas are
/// averaged.
pub fn average_traces(traces: &[MetricsTrace]) -> Result<MetricsTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces to average".to_string()))?;
    let len = first.len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::dim("traces of unequal length".to_string()));
    }
    let n = traces.len() as f64;
    let mut out = MetricsTrace::default();
    for (idx, base) in first.records.iter().enumerate() {
        let error = traces.iter().map(|t| t.records[idx].error).sum::<f64>() / n;
        let delta = traces.iter().map(|t| t.records[idx].delta).sum::<f64>() / n;
        let survivors =
            traces.iter().map(|t| t.records[idx].survivors).sum::<usize>() / traces.len();
        out.records.push(TraceRecord {
            iteration: base.iteration,
            error,
            comm_cost: base.comm_cost,
            survivors,
            delta,
        });
    }
    Ok(out)
}

/// Aggregated per-iteration statistics across runs, the CSV payload.
#[derive(Debug, Clone)]
pub struct AggregatedTrace {
    pub rows: Vec<AggregatedRecord>,
}

#[derive(Debug, Clone)]
pub struct AggregatedRecord {
    pub iteration: usize,
    pub comm_cost: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub delta_mean: f64,
}

pub fn aggregate_traces(traces: &[MetricsTrace]) -> Result<AggregatedTrace> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidArgument("no traces to aggregate".to_string()))?;
    let len = first.len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::dim("traces of unequal length".to_string()));
    }
    let n = traces.len() as f64;
    let mut rows = Vec::with_capacity(len);
    for idx in 0..len {
        let errors: Vec<f64> = traces.iter().map(|t| t.records[idx].error).collect();
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
        let delta_mean = traces.iter().map(|t| t.records[idx].delta).sum::<f64>() / n;
        rows.push(AggregatedRecord {
            iteration: first.records[idx].iteration,
            comm_cost: first.records[idx].comm_cost,
            error_mean: mean,
            error_std: var.sqrt(),
            delta_mean,
        });
    }
    Ok(AggregatedTrace { rows })
}

impl AggregatedTrace {
    /// CSV with full round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,comm_cost,error_mean,error_std,delta_mean\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.comm_cost, r.error_mean, r.error_std, r.delta_mean
            ));
        }
        out
    }
}

/// Seed streams for one run.
#[derive(Debug, Clone, Copy)]
pub struct RunSeeds {
    run_seed: u64,
}

impl RunSeeds {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        RunSeeds {
            run_seed: mix(master_seed, run_index),
        }
    }

    /// Generator-value stream for iteration `t`.
    pub fn gen_stream(&self, t: u64) -> ChaCha8Rng {
        stream(mix(mix(self.run_seed, t), tag("gen")))
    }

    /// Erasure stream for iteration `t`.
    pub fn erase_stream(&self, t: u64) -> ChaCha8Rng {
        stream(mix(mix(self.run_seed, t), tag("erase")))
    }

    /// Stream for run-level initialisation (e.g. the random `X_0`).
    pub fn init_stream(&self) -> ChaCha8Rng {
        stream(mix(self.run_seed, tag("init")))
    }
}

/// Which update rule a simulated experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// No erasures, plain distributed computation.
    Noiseless,
    /// One block per worker; unavailable parts are carried over.
    Uncoded,
    /// `k` blocks, each replicated at `P/k` workers (same communication cost
    /// as the coded scheme).
    ReplicationComm,
    /// Pattern-driven replication: worker `i` stores the blocks of its
    /// pattern row (same storage cost as the coded scheme), transmitted
    /// uncombined.
    ReplicationStorage,
    /// LDGM coding with substitute decoding.
    Coded,
    /// Fractional-repetition approximate gradient coding (gradient descent
    /// only): workers transmit the sum of their block gradients.
    ApproxGradientCoding,
}

impl Scheme {
    pub fn label(&self, degree: usize) -> String {
        match self {
            Scheme::Noiseless => "noiseless".to_string(),
            Scheme::Uncoded => "uncoded".to_string(),
            Scheme::ReplicationComm => "replication".to_string(),
            Scheme::ReplicationStorage => "replication-storage".to_string(),
            Scheme::Coded => format!("coded-d{degree}"),
            Scheme::ApproxGradientCoding => "gradient-coding".to_string(),
        }
    }
}

/// Data partitioning geometry used by the engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Row,
    Column,
    Summa,
}

/// Which iterative computation is being run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    PageRank,
    Eigen,
    Svd,
    GradientDescent,
}

/// Per-worker communicated reals per iteration, from the cost analysis of
/// each scheme: the dominant master-to-worker payload plus the result upload.
///
/// `r` is the panel width for the eigen/SVD variants and the parameter
/// dimension for gradient descent.
#[allow(clippy::too_many_arguments)]
pub fn comm_cost_per_iter(
    scheme: Scheme,
    problem: ProblemKind,
    split: SplitKind,
    n: usize,
    k: usize,
    p: usize,
    d: usize,
    r: usize,
) -> Result<f64> {
    let n = n as f64;
    let (k_f, p_f, d_f, r_f) = (k as f64, p as f64, d as f64, r as f64);
    let base = match problem {
        ProblemKind::PageRank => match (split, scheme) {
            (SplitKind::Row, Scheme::Noiseless | Scheme::Uncoded) => n * (1.0 + 1.0 / p_f),
            (SplitKind::Row, Scheme::ReplicationComm) => n * (1.0 + 1.0 / k_f),
            (SplitKind::Row, Scheme::ReplicationStorage) => n * (1.0 + d_f / k_f),
            (SplitKind::Row, Scheme::Coded) => n * (1.0 + 1.0 / k_f),
            (SplitKind::Column, Scheme::Noiseless | Scheme::Uncoded) => n * (1.0 + 1.0 / p_f),
            (SplitKind::Column, Scheme::ReplicationComm) => n * (1.0 + 1.0 / k_f),
            (SplitKind::Column, Scheme::ReplicationStorage) => n * (d_f + d_f / k_f),
            (SplitKind::Column, Scheme::Coded) => n * (1.0 + d_f / k_f),
            (SplitKind::Summa, Scheme::Noiseless | Scheme::Coded) => {
                let g = (k_f).sqrt();
                n * (1.0 / g + g / k_f)
            }
            (split, scheme) => {
                return Err(Error::InvalidArgument(format!(
                    "no cost model for scheme {scheme:?} with {split:?} splitting"
                )))
            }
        },
        ProblemKind::Eigen => {
            // Column splitting throughout.
            r_f * match scheme {
                Scheme::Noiseless | Scheme::Uncoded => n * (1.0 + 1.0 / p_f),
                Scheme::ReplicationComm => n * (1.0 + 1.0 / k_f),
                Scheme::ReplicationStorage => n * (d_f + d_f / k_f),
                Scheme::Coded => n * (1.0 + d_f / k_f),
                Scheme::ApproxGradientCoding => {
                    return Err(Error::InvalidArgument(
                        "gradient coding does not apply to eigen problems".to_string(),
                    ))
                }
            }
        }
        ProblemKind::Svd => {
            // X_t is broadcast whole and results are N x r: 2 N r for every
            // scheme except uncombined pattern replication.
            match scheme {
                Scheme::ReplicationStorage => 2.0 * (1.0 + d_f) * n * r_f,
                Scheme::ApproxGradientCoding => {
                    return Err(Error::InvalidArgument(
                        "gradient coding does not apply to SVD problems".to_string(),
                    ))
                }
                _ => 2.0 * n * r_f,
            }
        }
        ProblemKind::GradientDescent => {
            // Two rounds of length-dim messages; `r` carries the parameter
            // dimension here.
            match scheme {
                Scheme::ReplicationStorage => 2.0 * (1.0 + d_f) * r_f,
                _ => 2.0 * r_f,
            }
        }
    };
    Ok(base)
}

/// A fully prepared problem instance for [`run_experiment`].
#[derive(Debug, Clone)]
pub enum ProblemInstance {
    PageRank {
        problem: crate::problems::PageRankProblem,
        split: SplitKind,
    },
    Eigen {
        matrix: crate::kernel::SparseMatrix,
        rank: usize,
        reference: crate::kernel::DenseMatrix,
        accelerate: bool,
    },
    Svd {
        data: crate::kernel::SparseMatrix,
        rank: usize,
        reference: crate::kernel::DenseMatrix,
    },
    GradientDescent {
        problem: crate::problems::LeastSquaresProblem,
        step_size: f64,
    },
}

impl ProblemInstance {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemInstance::PageRank { .. } => ProblemKind::PageRank,
            ProblemInstance::Eigen { .. } => ProblemKind::Eigen,
            ProblemInstance::Svd { .. } => ProblemKind::Svd,
            ProblemInstance::GradientDescent { .. } => ProblemKind::GradientDescent,
        }
    }

    pub fn split(&self) -> SplitKind {
        match self {
            ProblemInstance::PageRank { split, .. } => *split,
            ProblemInstance::Eigen { .. } => SplitKind::Column,
            ProblemInstance::Svd { .. } => SplitKind::Row,
            ProblemInstance::GradientDescent { .. } => SplitKind::Row,
        }
    }

    /// Length of the iterate (used by the cost formulas).
    pub fn size(&self) -> usize {
        match self {
            ProblemInstance::PageRank { problem, .. } => problem.b.n_rows(),
            ProblemInstance::Eigen { matrix, .. } => matrix.n_rows(),
            ProblemInstance::Svd { data, .. } => data.n_cols(),
            ProblemInstance::GradientDescent { problem, .. } => problem.a_data.n_cols(),
        }
    }

    /// Panel width `r` (or the parameter dimension for gradient descent).
    pub fn panel(&self) -> usize {
        match self {
            ProblemInstance::PageRank { .. } => 1,
            ProblemInstance::Eigen { rank, .. } | ProblemInstance::Svd { rank, .. } => *rank,
            ProblemInstance::GradientDescent { problem, .. } => problem.a_data.n_cols(),
        }
    }
}

/// Scheme-level configuration of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    /// Split count `k` of the coded/replicated schemes (uncoded and
    /// noiseless use one block per worker).
    pub splits: usize,
    pub workers: usize,
    pub degree: usize,
    pub erasure: ErasureModel,
    pub iterations: usize,
    pub runs: usize,
    pub master_seed: u64,
    /// Explicit pattern (otherwise derived from the master seed).
    pub pattern: Option<crate::codes::SparsityPattern>,
}

impl ExperimentConfig {
    fn validate(&self, instance: &ProblemInstance) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.workers == 0 || self.splits == 0 {
            return Err(Error::config("workers/splits", "must be positive"));
        }
        match (instance.split(), self.scheme) {
            (SplitKind::Summa, Scheme::Noiseless | Scheme::Coded) => {}
            (SplitKind::Summa, other) => {
                return Err(Error::config(
                    "scheme",
                    format!("{other:?} is not available with SUMMA splitting"),
                ))
            }
            (_, Scheme::ApproxGradientCoding)
                if instance.kind() != ProblemKind::GradientDescent =>
            {
                return Err(Error::config(
                    "scheme",
                    "approximate gradient coding only applies to gradient descent",
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// The pattern used by the coded and replication-storage schemes; drawn
    /// from the master seed when not pinned.
    pub fn resolve_pattern(&self, instance: &ProblemInstance) -> Result<crate::codes::SparsityPattern> {
        use crate::codes::SparsityPattern;
        if let Some(p) = &self.pattern {
            return Ok(p.clone());
        }
        let mut rng = stream(mix(self.master_seed, tag("pattern")));
        if instance.split() == SplitKind::Summa {
            let g = (self.splits as f64).sqrt().round() as usize;
            if g * g != self.splits {
                return Err(Error::config("splits", "SUMMA needs a perfect square"));
            }
            if !self.workers.is_multiple_of(g) {
                return Err(Error::config(
                    "workers",
                    format!("{} workers not divisible into {g} SUMMA groups", self.workers),
                ));
            }
            let per_group = self.workers / g;
            if per_group == 2 * g {
                SparsityPattern::combined_cyclic(g, self.degree, &mut rng)
            } else {
                SparsityPattern::random_regular(per_group, g, self.degree, &mut rng)
            }
        } else if self.workers == 2 * self.splits {
            SparsityPattern::combined_cyclic(self.splits, self.degree, &mut rng)
        } else {
            SparsityPattern::random_regular(self.workers, self.splits, self.degree, &mut rng)
        }
    }
}

/// Run the configured scheme `runs` times and return one trace per run.
pub fn run_experiment(
    instance: &ProblemInstance,
    cfg: &ExperimentConfig,
) -> Result<Vec<MetricsTrace>> {
    cfg.validate(instance)?;
    let per_iter = comm_cost_per_iter(
        cfg.scheme,
        instance.kind(),
        instance.split(),
        instance.size(),
        cfg.splits,
        cfg.workers,
        cfg.degree,
        instance.panel(),
    )?;
    (0..cfg.runs)
        .map(|run| run_single(instance, cfg, run as u64, per_iter))
        .collect()
}

fn run_single(
    instance: &ProblemInstance,
    cfg: &ExperimentConfig,
    run: u64,
    per_iter: f64,
) -> Result<MetricsTrace> {
    use crate::algorithms::power::BlockHolders;

    let seeds = RunSeeds::new(cfg.master_seed, run);
    let mut trace = MetricsTrace::default();
    let record = |t: usize, error: f64, info: Option<&crate::algorithms::StepInfo>| TraceRecord {
        iteration: t,
        error,
        comm_cost: per_iter * t as f64,
        survivors: info.map_or(cfg.workers, |i| i.survivors),
        delta: info.map_or(0.0, |i| i.delta),
    };

    // Effective split count and holder map for the baseline schemes.
    let baseline_holders = |splits: usize| -> Result<Option<(usize, BlockHolders)>> {
        Ok(match cfg.scheme {
            Scheme::Uncoded => Some((cfg.workers, BlockHolders::uncoded(cfg.workers))),
            Scheme::ReplicationComm => {
                Some((splits, BlockHolders::replicated(cfg.workers, splits)))
            }
            Scheme::ReplicationStorage => {
                let pattern = cfg.resolve_pattern(instance)?;
                Some((splits, BlockHolders::from_pattern(&pattern)))
            }
            _ => None,
        })
    };

    match instance {
        ProblemInstance::PageRank { problem, split } => {
            let n = problem.b.n_rows();
            let x0 = vec![1.0 / n as f64; n];
            match split {
                SplitKind::Row => {
                    use crate::algorithms::power::*;
                    let splits = match cfg.scheme {
                        Scheme::Noiseless | Scheme::Uncoded => cfg.workers,
                        _ => cfg.splits,
                    };
                    let system = RowSystem::new(&problem.b, &problem.y, splits)?;
                    let x_star = crate::splitting::pad_vector(&problem.x_star, &system.plan);
                    let mut state = system.initial_state(&x0);
                    trace.push(record(0, l2_err(&state.x, &x_star), None));
                    let pattern = match cfg.scheme {
                        Scheme::Coded => Some(cfg.resolve_pattern(instance)?),
                        _ => None,
                    };
                    let holders = baseline_holders(cfg.splits)?;
                    for t in 1..=cfg.iterations {
                        let (next, info) = match cfg.scheme {
                            Scheme::Noiseless => (power_row_noiseless(&system, &state)?, None),
                            Scheme::Coded => {
                                let survivors = cfg.erasure.draw_survivors(
                                    cfg.workers,
                                    &mut seeds.erase_stream(t as u64),
                                )?;
                                let gen = crate::codes::GeneratorMatrix::sample(
                                    pattern.as_ref().expect("coded"),
                                    t as u64,
                                    &mut seeds.gen_stream(t as u64),
                                );
                                let (next, info) = power_row_step(&system, &state, &gen, &survivors)?;
                                (next, Some(info))
                            }
                            _ => {
                                let survivors = cfg.erasure.draw_survivors(
                                    cfg.workers,
                                    &mut seeds.erase_stream(t as u64),
                                )?;
                                let (_, h) = holders.as_ref().expect("baseline");
                                let (next, info) =
                                    power_row_baseline_step(&system, &state, h, &survivors)?;
                                (next, Some(info))
                            }
                        };
                        state = next;
                        trace.push(record(t, l2_err(&state.x, &x_star), info.as_ref()));
                    }
                    Ok(trace)
                }
                SplitKind::Column => {
                    use crate::algorithms::power::*;
                    let splits = match cfg.scheme {
                        Scheme::Noiseless | Scheme::Uncoded => cfg.workers,
                        _ => cfg.splits,
                    };
                    let system = ColumnSystem::new(&problem.b, &problem.y, splits)?;
                    let x_star = crate::splitting::pad_vector(&problem.x_star, &system.plan);
                    let mut state = system.initial_state(&x0);
                    trace.push(record(0, l2_err(&state.x, &x_star), None));
                    let pattern = match cfg.scheme {
                        Scheme::Coded => Some(cfg.resolve_pattern(instance)?),
                        _ => None,
                    };
                    let holders = baseline_holders(cfg.splits)?;
                    for t in 1..=cfg.iterations {
                        let (next, info) = match cfg.scheme {
                            Scheme::Noiseless => (power_col_noiseless(&system, &state)?, None),
                            Scheme::Coded => {
                                let survivors = cfg.erasure.draw_survivors(
                                    cfg.workers,
                                    &mut seeds.erase_stream(t as u64),
                                )?;
                                let gen = crate::codes::GeneratorMatrix::sample(
                                    pattern.as_ref().expect("coded"),
                                    t as u64,
                                    &mut seeds.gen_stream(t as u64),
                                );
                                let (next, info) = power_col_step(&system, &state, &gen, &survivors)?;
                                (next, Some(info))
                            }
                            _ => {
                                let survivors = cfg.erasure.draw_survivors(
                                    cfg.workers,
                                    &mut seeds.erase_stream(t as u64),
                                )?;
                                let (_, h) = holders.as_ref().expect("baseline");
                                let (next, info) =
                                    power_col_baseline_step(&system, &state, h, &survivors)?;
                                (next, Some(info))
                            }
                        };
                        state = next;
                        trace.push(record(t, l2_err(&state.x, &x_star), info.as_ref()));
                    }
                    Ok(trace)
                }
                SplitKind::Summa => {
                    use crate::algorithms::power::*;
                    let g = (cfg.splits as f64).sqrt().round() as usize;
                    let system =
                        SummaSystem::new(&problem.b, &problem.y, cfg.splits, cfg.workers / g)?;
                    let x_star = crate::splitting::pad_vector(&problem.x_star, &system.plan);
                    let mut state = system.initial_state(&x0);
                    trace.push(record(0, l2_err(&state.x, &x_star), None));
                    let pattern = cfg.resolve_pattern(instance)?;
                    for t in 1..=cfg.iterations {
                        let (next, info) = match cfg.scheme {
                            Scheme::Noiseless => (power_summa_noiseless(&system, &state)?, None),
                            Scheme::Coded => {
                                let survivors = cfg.erasure.draw_survivors(
                                    cfg.workers,
                                    &mut seeds.erase_stream(t as u64),
                                )?;
                                let mut gen_stream = seeds.gen_stream(t as u64);
                                let gens: Vec<_> = (0..g)
                                    .map(|_| {
                                        crate::codes::GeneratorMatrix::sample(
                                            &pattern,
                                            t as u64,
                                            &mut gen_stream,
                                        )
                                    })
                                    .collect();
                                let (next, info) =
                                    power_summa_step(&system, &state, &gens, &survivors)?;
                                (next, Some(info))
                            }
                            _ => unreachable!("validated"),
                        };
                        state = next;
                        trace.push(record(t, l2_err(&state.x, &x_star), info.as_ref()));
                    }
                    Ok(trace)
                }
            }
        }
        ProblemInstance::Eigen {
            matrix,
            rank,
            reference,
            accelerate,
        } => {
            use crate::algorithms::ortho::*;
            let splits = match cfg.scheme {
                Scheme::Noiseless | Scheme::Uncoded => cfg.workers,
                _ => cfg.splits,
            };
            let system = OrthoSystem::column_split(matrix, splits, *rank)?;
            run_ortho(
                instance,
                cfg,
                &system,
                reference,
                *accelerate,
                &seeds,
                record,
            )
        }
        ProblemInstance::Svd {
            data,
            rank,
            reference,
        } => {
            use crate::algorithms::ortho::*;
            let splits = match cfg.scheme {
                Scheme::Noiseless | Scheme::Uncoded => cfg.workers,
                _ => cfg.splits,
            };
            let system = OrthoSystem::gram_row_split(data, splits, *rank)?;
            run_ortho(instance, cfg, &system, reference, true, &seeds, record)
        }
        ProblemInstance::GradientDescent { problem, step_size } => {
            use crate::algorithms::grad::*;
            let splits = match cfg.scheme {
                Scheme::Noiseless | Scheme::Uncoded => cfg.workers,
                Scheme::ApproxGradientCoding => cfg.splits,
                _ => cfg.splits,
            };
            let split_problem = SplitLeastSquares::new(problem, splits)?;
            let optimum = problem.objective(&problem.x_star);
            let dim = problem.a_data.n_cols();
            let mut state = GradIterState::start(dim, splits);
            trace.push(record(0, problem.objective(&state.x) - optimum, None));
            let pattern = match cfg.scheme {
                Scheme::Coded => Some(cfg.resolve_pattern(instance)?),
                _ => None,
            };
            let holders = baseline_holders(cfg.splits)?;
            let fr = match cfg.scheme {
                Scheme::ApproxGradientCoding => {
                    Some(FractionalRepetition::new(cfg.workers, splits)?)
                }
                _ => None,
            };
            for t in 1..=cfg.iterations {
                let (next, info) = match cfg.scheme {
                    Scheme::Noiseless => {
                        let (next, _) = grad_noiseless_step(&split_problem, &state, *step_size)?;
                        (next, None)
                    }
                    Scheme::Coded => {
                        let survivors = cfg
                            .erasure
                            .draw_survivors(cfg.workers, &mut seeds.erase_stream(t as u64))?;
                        let gen = crate::codes::GeneratorMatrix::sample(
                            pattern.as_ref().expect("coded"),
                            t as u64,
                            &mut seeds.gen_stream(t as u64),
                        );
                        let (next, info) =
                            grad_coded_step(&split_problem, &state, &gen, &survivors, *step_size)?;
                        (next, Some(info))
                    }
                    Scheme::ApproxGradientCoding => {
                        let survivors = cfg
                            .erasure
                            .draw_survivors(cfg.workers, &mut seeds.erase_stream(t as u64))?;
                        let (next, info) = grad_fractional_repetition_step(
                            &split_problem,
                            &state,
                            fr.as_ref().expect("fr"),
                            &survivors,
                            *step_size,
                        )?;
                        (next, Some(info))
                    }
                    _ => {
                        let survivors = cfg
                            .erasure
                            .draw_survivors(cfg.workers, &mut seeds.erase_stream(t as u64))?;
                        let (_, h) = holders.as_ref().expect("baseline");
                        let (next, info) = grad_baseline_step(
                            &split_problem,
                            &state,
                            h,
                            &survivors,
                            *step_size,
                        )?;
                        (next, Some(info))
                    }
                };
                state = next;
                trace.push(record(
                    t,
                    problem.objective(&state.x) - optimum,
                    info.as_ref(),
                ));
            }
            Ok(trace)
        }
    }
}

fn run_ortho(
    instance: &ProblemInstance,
    cfg: &ExperimentConfig,
    system: &crate::algorithms::ortho::OrthoSystem,
    reference: &crate::kernel::DenseMatrix,
    accelerate: bool,
    seeds: &RunSeeds,
    record: impl Fn(usize, f64, Option<&crate::algorithms::StepInfo>) -> TraceRecord,
) -> Result<MetricsTrace> {
    use crate::algorithms::ortho::*;
    use crate::algorithms::power::BlockHolders;
    use crate::kernel::subspace_distance;

    let mut init = seeds.init_stream();
    let x0 = system.random_start(&mut init)?;
    let mut state = system.initial_state(x0);
    let metric = |x: &crate::kernel::DenseMatrix| -> Result<f64> {
        subspace_distance(&active_iterate(system, x), reference)
    };
    let mut trace = MetricsTrace::default();
    trace.push(record(0, metric(&state.x)?, None));
    let pattern = match cfg.scheme {
        Scheme::Coded => Some(cfg.resolve_pattern(instance)?),
        _ => None,
    };
    let holders = match cfg.scheme {
        Scheme::Uncoded => Some(BlockHolders::uncoded(cfg.workers)),
        Scheme::ReplicationComm => Some(BlockHolders::replicated(cfg.workers, cfg.splits)),
        Scheme::ReplicationStorage => {
            Some(BlockHolders::from_pattern(&cfg.resolve_pattern(instance)?))
        }
        _ => None,
    };
    for t in 1..=cfg.iterations {
        let mut gen_stream = seeds.gen_stream(t as u64);
        let (next, info) = match cfg.scheme {
            Scheme::Noiseless => {
                let (next, _) = ortho_noiseless_step(system, &state, accelerate, &mut gen_stream)?;
                (next, None)
            }
            Scheme::Coded => {
                let survivors = cfg
                    .erasure
                    .draw_survivors(cfg.workers, &mut seeds.erase_stream(t as u64))?;
                let gen = crate::codes::GeneratorMatrix::sample(
                    pattern.as_ref().expect("coded"),
                    t as u64,
                    &mut gen_stream,
                );
                let (next, info) =
                    ortho_step(system, &state, &gen, &survivors, accelerate, &mut gen_stream)?;
                (next, Some(info.base))
            }
            _ => {
                let survivors = cfg
                    .erasure
                    .draw_survivors(cfg.workers, &mut seeds.erase_stream(t as u64))?;
                let (next, info) = ortho_baseline_step(
                    system,
                    &state,
                    holders.as_ref().expect("baseline"),
                    &survivors,
                    accelerate,
                    &mut gen_stream,
                )?;
                (next, Some(info.base))
            }
        };
        state = next;
        trace.push(record(t, metric(&state.x)?, info.as_ref()));
    }
    Ok(trace)
}

fn l2_err(x: &[f64], x_star: &[f64]) -> f64 {
    x.iter()
        .zip(x_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::stream;

    #[test]
    fn fixed_fraction_zero_keeps_everyone() {
        let m = ErasureModel::fixed_fraction(0.0).unwrap();
        let s = m.draw_survivors(7, &mut stream(1)).unwrap();
        assert_eq!(s, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn fixed_fraction_half_of_twenty() {
        let m = ErasureModel::fixed_fraction(0.5).unwrap();
        for seed in 0..50 {
            let s = m.draw_survivors(20, &mut stream(seed)).unwrap();
            assert_eq!(s.len(), 10);
        }
    }

    #[test]
    fn erasure_frequency_matches_epsilon() {
        let m = ErasureModel::fixed_fraction(1.0 / 3.0).unwrap();
        let p = 6;
        let mut erased_counts = vec![0usize; p];
        let n = 100_000;
        let mut rng = stream(77);
        for _ in 0..n {
            let s = m.draw_survivors(p, &mut rng).unwrap();
            let mut erased = vec![true; p];
            for w in s {
                erased[w] = false;
            }
            for (w, &e) in erased.iter().enumerate() {
                if e {
                    erased_counts[w] += 1;
                }
            }
        }
        for &c in &erased_counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn bernoulli_draws_vary_in_size() {
        let m = ErasureModel::bernoulli(0.5).unwrap();
        let sizes: Vec<usize> = (0..100)
            .map(|seed| m.draw_survivors(10, &mut stream(seed)).unwrap().len())
            .collect();
        assert!(sizes.iter().any(|&s| s != sizes[0]));
        let mean = sizes.iter().sum::<usize>() as f64 / 100.0;
        assert!((mean - 5.0).abs() < 1.0);
    }

    #[test]
    fn erasures_independent_across_iterations() {
        // Lag-1 correlation of the per-worker erasure indicator.
        let m = ErasureModel::fixed_fraction(0.5).unwrap();
        let p = 8;
        let n = 100_000;
        let mut rng = stream(13);
        let mut prev: Option<Vec<bool>> = None;
        let mut sum_xy = 0.0;
        let mut sum_x = 0.0;
        let mut count = 0.0;
        for _ in 0..n {
            let survivors = m.draw_survivors(p, &mut rng).unwrap();
            let mut erased = vec![true; p];
            for w in survivors {
                erased[w] = false;
            }
            if let Some(prev) = prev {
                for w in 0..p {
                    let x = if prev[w] { 1.0 } else { 0.0 };
                    let y = if erased[w] { 1.0 } else { 0.0 };
                    sum_xy += x * y;
                    sum_x += x;
                    count += 1.0;
                }
            }
            prev = Some(erased);
        }
        let mean: f64 = sum_x / count;
        let cov = sum_xy / count - mean * mean;
        let corr = cov / (mean * (1.0 - mean));
        assert!(corr.abs() < 0.02, "lag-1 correlation {corr}");
    }

    #[test]
    fn invalid_epsilon_rejected() {
        assert!(ErasureModel::fixed_fraction(1.5).is_err());
        assert!(ErasureModel::bernoulli(-0.1).is_err());
    }

    #[test]
    fn average_traces_basics() {
        let mk = |errors: &[f64]| MetricsTrace {
            records: errors
                .iter()
                .enumerate()
                .map(|(i, &e)| TraceRecord {
                    iteration: i,
                    error: e,
                    comm_cost: i as f64,
                    survivors: 4,
                    delta: 0.1,
                })
                .collect(),
        };
        let a = mk(&[1.0, 0.5]);
        let avg = average_traces(std::slice::from_ref(&a)).unwrap();
        assert_eq!(avg, a);
        let b = mk(&[3.0, 1.5]);
        let avg = average_traces(&[a.clone(), b]).unwrap();
        assert_eq!(avg.records[0].error, 2.0);
        assert_eq!(avg.records[1].error, 1.0);
        let short = mk(&[1.0]);
        assert!(average_traces(&[a, short]).is_err());
    }

    #[test]
    fn cost_formulas_match_reported_values() {
        use ProblemKind::*;
        use Scheme::*;
        use SplitKind::*;
        let n = 1000.0;
        let c = |s, split, k, p, d, r| {
            comm_cost_per_iter(s, PageRank, split, 1000, k, p, d, r).unwrap()
        };
        // Row-coded 1.1 N, uncoded 1.05 N, replication-storage 1.3 N (d=3).
        assert!((c(Coded, Row, 10, 20, 2, 1) - 1.1 * n).abs() < 1e-9);
        assert!((c(Uncoded, Row, 10, 20, 2, 1) - 1.05 * n).abs() < 1e-9);
        assert!((c(ReplicationComm, Row, 10, 20, 2, 1) - 1.1 * n).abs() < 1e-9);
        assert!((c(ReplicationStorage, Row, 10, 20, 3, 1) - 1.3 * n).abs() < 1e-9);
        // Column-coded N(1 + d/k).
        assert!((c(Coded, Column, 48, 96, 3, 1) - n * (1.0 + 3.0 / 48.0)).abs() < 1e-9);
        // Eigen variants scale by r.
        let eig = comm_cost_per_iter(Coded, Eigen, Column, 1000, 48, 96, 2, 2).unwrap();
        assert!((eig - 1.041_666_666_666_666_7 * n * 2.0).abs() < 1e-6);
        let eig_rs = comm_cost_per_iter(ReplicationStorage, Eigen, Column, 1000, 48, 96, 3, 2)
            .unwrap();
        assert!((eig_rs - n * 2.0 * (3.0 + 3.0 / 48.0)).abs() < 1e-6);
        // SVD: 2 N r for everything except pattern replication.
        let svd = comm_cost_per_iter(Coded, Svd, Row, 1000, 50, 100, 3, 5).unwrap();
        assert!((svd - 2.0 * n * 5.0).abs() < 1e-9);
        let svd_rs = comm_cost_per_iter(ReplicationStorage, Svd, Row, 1000, 50, 100, 3, 5).unwrap();
        assert!((svd_rs - 2.0 * 4.0 * n * 5.0).abs() < 1e-9);
        // Gradient descent: 2 dim.
        let gd = comm_cost_per_iter(Coded, GradientDescent, Row, 5000, 50, 100, 2, 1000).unwrap();
        assert!((gd - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn run_seeds_are_decoupled() {
        let seeds = RunSeeds::new(7, 0);
        let mut g = seeds.gen_stream(3);
        let mut e = seeds.erase_stream(3);
        let a: u64 = g.random();
        let b: u64 = e.random();
        assert_ne!(a, b);
        // Re-derivation is stable.
        let mut g2 = RunSeeds::new(7, 0).gen_stream(3);
        assert_eq!(a, g2.random::<u64>());
    }

    fn small_pagerank_instance(seed: u64) -> ProblemInstance {
        let mut rng = stream(seed);
        let adj = crate::problems::gen_er(80, 0.15, &mut rng).unwrap();
        let problem =
            crate::problems::build_pagerank(&adj, 0.15, None, crate::problems::DanglingMode::Keep)
                .unwrap();
        ProblemInstance::PageRank {
            problem,
            split: SplitKind::Row,
        }
    }

    fn base_config(scheme: Scheme) -> ExperimentConfig {
        ExperimentConfig {
            scheme,
            splits: 4,
            workers: 8,
            degree: 2,
            erasure: ErasureModel::fixed_fraction(0.5).unwrap(),
            iterations: 8,
            runs: 5,
            master_seed: 11,
            pattern: None,
        }
    }

    #[test]
    fn zero_iterations_keeps_only_initial_record() {
        let instance = small_pagerank_instance(1);
        let mut cfg = base_config(Scheme::Coded);
        cfg.iterations = 0;
        cfg.runs = 1;
        let traces = run_experiment(&instance, &cfg).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].len(), 1);
        assert_eq!(traces[0].records[0].iteration, 0);
        assert_eq!(traces[0].records[0].comm_cost, 0.0);
    }

    #[test]
    fn noiseless_traces_identical_across_runs() {
        let instance = small_pagerank_instance(2);
        let cfg = base_config(Scheme::Noiseless);
        let traces = run_experiment(&instance, &cfg).unwrap();
        for t in &traces[1..] {
            assert_eq!(t, &traces[0]);
        }
    }

    #[test]
    fn saturated_degree_without_erasures_matches_noiseless() {
        // d = k with no erasures: the generator is dense and always full
        // rank, so the coded trajectory reduces to the noiseless one.
        let instance = small_pagerank_instance(3);
        let mut coded_cfg = base_config(Scheme::Coded);
        coded_cfg.degree = 4;
        coded_cfg.erasure = ErasureModel::fixed_fraction(0.0).unwrap();
        coded_cfg.runs = 2;
        let coded = run_experiment(&instance, &coded_cfg).unwrap();
        let mut plain_cfg = coded_cfg.clone();
        plain_cfg.scheme = Scheme::Noiseless;
        let plain = run_experiment(&instance, &plain_cfg).unwrap();
        for (c, p) in coded[0].records.iter().zip(&plain[0].records) {
            assert!(
                (c.error - p.error).abs() < 1e-10,
                "iteration {}: {} vs {}",
                c.iteration,
                c.error,
                p.error
            );
        }
    }

    #[test]
    fn realized_delta_matches_estimator() {
        let instance = small_pagerank_instance(4);
        let mut cfg = base_config(Scheme::Coded);
        cfg.runs = 60;
        cfg.iterations = 20;
        let traces = run_experiment(&instance, &cfg).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in &traces {
            for r in &t.records[1..] {
                sum += r.delta;
                count += 1;
            }
        }
        let realized = sum / count as f64;
        let pattern = cfg.resolve_pattern(&instance).unwrap();
        let mut rng = stream(77);
        let estimated =
            crate::codes::estimate_delta(&pattern, &cfg.erasure, 30_000, &mut rng).unwrap();
        // Three standard errors of the realized mean (delta per step is
        // bounded by 1, almost always far smaller).
        let slack = 3.0 * 0.5 / (count as f64).sqrt();
        assert!(
            (realized - estimated).abs() < slack,
            "realized {realized:.4} vs estimated {estimated:.4} (slack {slack:.4})"
        );
    }

    #[test]
    fn summa_rejects_baseline_schemes() {
        let mut rng = stream(5);
        let adj = crate::problems::gen_er(36, 0.2, &mut rng).unwrap();
        let problem =
            crate::problems::build_pagerank(&adj, 0.15, None, crate::problems::DanglingMode::Keep)
                .unwrap();
        let instance = ProblemInstance::PageRank {
            problem,
            split: SplitKind::Summa,
        };
        let mut cfg = base_config(Scheme::Uncoded);
        cfg.splits = 4;
        cfg.workers = 8;
        assert!(run_experiment(&instance, &cfg).is_err());
        cfg.scheme = Scheme::Coded;
        assert!(run_experiment(&instance, &cfg).is_ok());
    }
}
