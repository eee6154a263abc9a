//! Flat `key = value` experiment configuration: one assignment per line,
//! `#` starts a comment, keys are lower-case with underscores. Presets under
//! `configs/` follow this grammar.

use crate::algorithms::ortho::{reference_subspace, OrthoSystem};
use crate::codes::SparsityPattern;
use crate::kernel::SparseMatrix;
use crate::problems::{
    build_least_squares, build_pagerank, build_shifted_laplacian, gen_er, gen_planted, gen_sbm,
    load_edge_list, DanglingMode, IsolateMode,
};
use crate::seeding::{mix, stream, tag};
use crate::simharness::{
    ErasureKind, ErasureModel, ExperimentConfig, ProblemInstance, Scheme, SplitKind,
};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Parsed key-value configuration with typed accessors. Reading a key marks
/// it used so unknown leftovers can be rejected.
#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                reason: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    reason: "empty key or value".to_string(),
                });
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(Error::Parse {
                    line: idx + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(RawConfig {
            values,
            used: Default::default(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn empty() -> Self {
        RawConfig {
            values: BTreeMap::new(),
            used: Default::default(),
            base_dir: PathBuf::from("."),
        }
    }

    /// Override a value (CLI flags beat the file).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        if let Some(v) = self.values.get(key) {
            self.used.borrow_mut().insert(key.to_string());
            Some(v.as_str())
        } else {
            None
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(key, "missing required key"))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    pub fn value_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse_value(key)?.unwrap_or(default))
    }

    pub fn flag_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") | Some("yes") | Some("on") => Ok(true),
            Some("false") | Some("no") | Some("off") => Ok(false),
            Some(other) => Err(Error::config(key, format!("expected boolean, got {other:?}"))),
        }
    }

    /// Keys that were never read by the consumer.
    pub fn unused_keys(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect()
    }

    pub fn reject_unused(&self) -> Result<()> {
        let unused = self.unused_keys();
        if let Some(first) = unused.first() {
            return Err(Error::config(first, "unknown key"));
        }
        Ok(())
    }

    fn resolve_path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Default master seed, fixed so runs are reproducible out of the box.
pub const DEFAULT_SEED: u64 = 20180511;

pub fn parse_scheme(name: &str, default_degree: usize) -> Result<(Scheme, usize)> {
    let name = name.trim();
    match name {
        "noiseless" => Ok((Scheme::Noiseless, default_degree)),
        "uncoded" => Ok((Scheme::Uncoded, default_degree)),
        "replication" | "replication-comm" => Ok((Scheme::ReplicationComm, default_degree)),
        "replication-storage" => Ok((Scheme::ReplicationStorage, default_degree)),
        "coded" => Ok((Scheme::Coded, default_degree)),
        "gradient-coding" | "approx-gradient-coding" => {
            Ok((Scheme::ApproxGradientCoding, default_degree))
        }
        _ => {
            if let Some(d) = name.strip_prefix("coded-d") {
                let degree: usize = d
                    .parse()
                    .map_err(|_| Error::config("schemes", format!("bad coded degree in {name:?}")))?;
                Ok((Scheme::Coded, degree))
            } else if let Some(d) = name.strip_prefix("replication-storage-d") {
                let degree: usize = d.parse().map_err(|_| {
                    Error::config("schemes", format!("bad replication degree in {name:?}"))
                })?;
                Ok((Scheme::ReplicationStorage, degree))
            } else {
                Err(Error::config("schemes", format!("unknown scheme {name:?}")))
            }
        }
    }
}

/// Everything `run` needs: the prepared instance plus per-scheme configs.
#[derive(Debug)]
pub struct Experiment {
    pub instance: ProblemInstance,
    pub schemes: Vec<(Scheme, usize)>,
    pub base: ExperimentConfig,
    pub problem_label: String,
}

/// How many noiseless reference iterations the eigen/SVD instances use.
const REFERENCE_ITERATIONS: usize = 1_500;

pub fn build_experiment(cfg: &RawConfig) -> Result<Experiment> {
    let seed = cfg.value_or("seed", DEFAULT_SEED)?;
    let problem = cfg.require("problem")?.to_string();
    let workers: usize = cfg
        .parse_value("workers")?
        .ok_or_else(|| Error::config("workers", "missing required key"))?;
    let splits: usize = cfg
        .parse_value("splits")?
        .ok_or_else(|| Error::config("splits", "missing required key"))?;
    let degree = cfg.value_or("degree", 2usize)?;
    let epsilon = cfg.value_or("epsilon", 0.5f64)?;
    let erasure_kind = match cfg.get("erasure").unwrap_or("fixed") {
        "fixed" => ErasureKind::FixedFraction,
        "bernoulli" => ErasureKind::Bernoulli,
        other => {
            return Err(Error::config(
                "erasure",
                format!("expected fixed|bernoulli, got {other:?}"),
            ))
        }
    };
    let erasure = ErasureModel::new(erasure_kind, epsilon)
        .map_err(|e| Error::config("epsilon", e.to_string()))?;
    let iterations = cfg.value_or("iters", 30usize)?;
    let runs = cfg.value_or("runs", 100usize)?;
    let schemes: Vec<(Scheme, usize)> = cfg
        .require("schemes")?
        .split(',')
        .map(|s| parse_scheme(s, degree))
        .collect::<Result<_>>()?;

    let pattern = match cfg.get("pattern_file") {
        Some(path) => {
            let full = cfg.resolve_path(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::io(full.display().to_string(), e))?;
            Some(SparsityPattern::from_text(&text)?)
        }
        None => None,
    };
    // Pattern family for seed-derived patterns: combined-cyclic when P = 2k,
    // unless `pattern = regular` asks for the row-wise random construction.
    let pattern_kind = cfg.get("pattern").unwrap_or("auto").to_string();
    let pattern = match (pattern, pattern_kind.as_str()) {
        (Some(p), _) => Some(p),
        (None, "auto") => None,
        (None, "regular") => {
            let mut s = stream(mix(seed, tag("pattern")));
            Some(SparsityPattern::random_regular(workers, splits, degree, &mut s)?)
        }
        (None, "cyclic") => {
            if workers != 2 * splits {
                return Err(Error::config(
                    "pattern",
                    "cyclic patterns need workers = 2 * splits",
                ));
            }
            let mut s = stream(mix(seed, tag("pattern")));
            Some(SparsityPattern::combined_cyclic(splits, degree, &mut s)?)
        }
        (None, other) => {
            return Err(Error::config(
                "pattern",
                format!("expected auto|cyclic|regular, got {other:?}"),
            ))
        }
    };
    // A fixed explicit pattern only fits one degree; reject mixed-degree
    // scheme lists in that case.
    if pattern.is_some() {
        let degrees: std::collections::BTreeSet<usize> = schemes
            .iter()
            .filter(|(s, _)| matches!(s, Scheme::Coded | Scheme::ReplicationStorage))
            .map(|&(_, d)| d)
            .collect();
        if degrees.len() > 1 {
            return Err(Error::config(
                "pattern",
                "an explicit pattern cannot serve schemes with different degrees",
            ));
        }
    }

    let instance_seed = mix(seed, tag("instance"));
    let (instance, problem_label) = build_instance(cfg, &problem, instance_seed)?;

    let base = ExperimentConfig {
        scheme: Scheme::Noiseless,
        splits,
        workers,
        degree,
        erasure,
        iterations,
        runs,
        master_seed: seed,
        pattern,
    };
    Ok(Experiment {
        instance,
        schemes,
        base,
        problem_label,
    })
}

fn build_adjacency(cfg: &RawConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Result<(SparseMatrix, String)> {
    match cfg.require("graph")? {
        "er" => {
            let n: usize = cfg
                .parse_value("n")?
                .ok_or_else(|| Error::config("n", "missing required key"))?;
            let p = match cfg.parse_value::<f64>("p_edge")? {
                Some(p) => p,
                None => {
                    let mean_degree: f64 = cfg
                        .parse_value("mean_degree")?
                        .ok_or_else(|| Error::config("p_edge", "set p_edge or mean_degree"))?;
                    mean_degree / (n as f64 - 1.0)
                }
            };
            Ok((gen_er(n, p, rng)?, format!("er-n{n}")))
        }
        "sbm" => {
            let n: usize = cfg
                .parse_value("n")?
                .ok_or_else(|| Error::config("n", "missing required key"))?;
            let p_in: f64 = cfg
                .parse_value("p_in")?
                .ok_or_else(|| Error::config("p_in", "missing required key"))?;
            let p_out: f64 = cfg
                .parse_value("p_out")?
                .ok_or_else(|| Error::config("p_out", "missing required key"))?;
            let (adj, _) = gen_sbm(n, p_in, p_out, rng)?;
            Ok((adj, format!("sbm-n{n}")))
        }
        "edgelist" => {
            let path = cfg.resolve_path(cfg.require("graph_file")?);
            Ok((
                load_edge_list(&path)?,
                format!("edgelist-{}", path.display()),
            ))
        }
        other => Err(Error::config(
            "graph",
            format!("expected er|sbm|edgelist, got {other:?}"),
        )),
    }
}

fn build_instance(
    cfg: &RawConfig,
    problem: &str,
    instance_seed: u64,
) -> Result<(ProblemInstance, String)> {
    let mut rng = stream(instance_seed);
    match problem {
        "pagerank" => {
            let (adj, label) = build_adjacency(cfg, &mut rng)?;
            let damping = cfg.value_or("damping", 0.15f64)?;
            let dangling = match cfg.get("dangling").unwrap_or("keep") {
                "keep" => DanglingMode::Keep,
                "uniform" => DanglingMode::Uniform,
                other => {
                    return Err(Error::config(
                        "dangling",
                        format!("expected keep|uniform, got {other:?}"),
                    ))
                }
            };
            let split = match cfg.get("split").unwrap_or("row") {
                "row" => SplitKind::Row,
                "column" => SplitKind::Column,
                "summa" => SplitKind::Summa,
                other => {
                    return Err(Error::config(
                        "split",
                        format!("expected row|column|summa, got {other:?}"),
                    ))
                }
            };
            let problem = build_pagerank(&adj, damping, None, dangling)?;
            Ok((
                ProblemInstance::PageRank { problem, split },
                format!("pagerank-{label}"),
            ))
        }
        "eigen" => {
            let (adj, label) = build_adjacency(cfg, &mut rng)?;
            let rank = cfg.value_or("rank", 2usize)?;
            let accelerate = cfg.flag_or("accelerate", false)?;
            let spectral = build_shifted_laplacian(&adj, rank, IsolateMode::Drop)?;
            let system = OrthoSystem::column_split(&spectral.m, 8.min(spectral.m.n_cols()), rank)?;
            let mut ref_stream = stream(mix(instance_seed, tag("reference")));
            let reference_full = reference_subspace(&system, &mut ref_stream, REFERENCE_ITERATIONS)?;
            let reference = crate::algorithms::ortho::active_iterate(&system, &reference_full);
            Ok((
                ProblemInstance::Eigen {
                    matrix: spectral.m,
                    rank,
                    reference,
                    accelerate,
                },
                format!("eigen-{label}"),
            ))
        }
        "svd" => {
            let n: usize = cfg
                .parse_value("n")?
                .ok_or_else(|| Error::config("n", "missing required key"))?;
            let p_bg = cfg.value_or("p_bg", 0.01f64)?;
            let block_count = cfg.value_or("block_count", 5usize)?;
            let block_size = cfg.value_or("block_size", 50usize)?;
            let block_density = cfg.value_or("block_density", 0.2f64)?;
            let rank = cfg.value_or("rank", 5usize)?;
            let blocks = vec![(block_size, block_density); block_count];
            let data = gen_planted(n, p_bg, &blocks, &mut rng)?;
            let system = OrthoSystem::gram_row_split(&data, 8.min(data.n_rows()), rank)?;
            let mut ref_stream = stream(mix(instance_seed, tag("reference")));
            let reference_full = reference_subspace(&system, &mut ref_stream, REFERENCE_ITERATIONS)?;
            let reference = crate::algorithms::ortho::active_iterate(&system, &reference_full);
            Ok((
                ProblemInstance::Svd {
                    data,
                    rank,
                    reference,
                },
                format!("svd-planted-n{n}"),
            ))
        }
        "gd" => {
            let rows: usize = cfg
                .parse_value("rows")?
                .ok_or_else(|| Error::config("rows", "missing required key"))?;
            let dim: usize = cfg
                .parse_value("dim")?
                .ok_or_else(|| Error::config("dim", "missing required key"))?;
            let problem = build_least_squares(rows, dim, &mut rng)?;
            let step_size = match cfg.get("step").unwrap_or("0.5") {
                "auto" => 0.5 / problem.lipschitz(),
                text => text
                    .parse::<f64>()
                    .map_err(|e| Error::config("step", format!("cannot parse {text:?}: {e}")))?,
            };
            Ok((
                ProblemInstance::GradientDescent { problem, step_size },
                format!("gd-{rows}x{dim}"),
            ))
        }
        other => Err(Error::config(
            "problem",
            format!("expected pagerank|eigen|svd|gd, got {other:?}"),
        )),
    }
}

/// Configuration of the `verify` subcommand.
pub struct VerifySpec {
    pub checks: Vec<String>,
    pub seed: u64,
    pub lemma1_samples: usize,
    pub table1_samples: usize,
    pub theorem_runs: usize,
    pub theorem_iters: usize,
    pub norm_graphs: usize,
    pub norm_n: usize,
    pub norm_p: f64,
    pub norm_eps: f64,
    pub norm_k: usize,
}

/// Checks run when none are named: the self-consistent statistical suite.
/// (`table1` reproduces the paper's reported per-degree delta table and is
/// opt-in; see the acceptance suite.)
pub const DEFAULT_CHECKS: [&str; 4] = ["lemma1", "theorem1", "theorem2", "norm-lemmas"];

pub fn build_verify_spec(cfg: &RawConfig) -> Result<VerifySpec> {
    let checks: Vec<String> = match cfg.get("checks") {
        None => DEFAULT_CHECKS.iter().map(|s| s.to_string()).collect(),
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
    };
    let known = ["table1", "lemma1", "theorem1", "theorem2", "norm-lemmas"];
    for c in &checks {
        if !known.contains(&c.as_str()) {
            return Err(Error::config("checks", format!("unknown check {c:?}")));
        }
    }
    Ok(VerifySpec {
        checks,
        seed: cfg.value_or("seed", DEFAULT_SEED)?,
        lemma1_samples: cfg.value_or("lemma1_samples", 100_000usize)?,
        table1_samples: cfg.value_or("table1_samples", 10_000usize)?,
        theorem_runs: cfg.value_or("theorem_runs", 2_000usize)?,
        theorem_iters: cfg.value_or("theorem_iters", 5usize)?,
        norm_graphs: cfg.value_or("norm_graphs", 100usize)?,
        norm_n: cfg.value_or("norm_n", 2_000usize)?,
        norm_p: cfg.value_or("norm_p", 0.02f64)?,
        norm_eps: cfg.value_or("norm_eps", 0.3f64)?,
        norm_k: cfg.value_or("norm_k", 10usize)?,
    })
}

/// Configuration of the `gen` subcommand.
pub struct GenSpec {
    pub kind: String,
    pub seed: u64,
    pub n: usize,
    pub p_edge: f64,
    pub p_in: f64,
    pub p_out: f64,
    pub p_bg: f64,
    pub block_count: usize,
    pub block_size: usize,
    pub block_density: f64,
}

pub fn build_gen_spec(cfg: &RawConfig) -> Result<GenSpec> {
    let kind = cfg.require("kind")?.to_string();
    if !["er", "sbm", "planted"].contains(&kind.as_str()) {
        return Err(Error::config(
            "kind",
            format!("expected er|sbm|planted, got {kind:?}"),
        ));
    }
    Ok(GenSpec {
        kind,
        seed: cfg.value_or("seed", DEFAULT_SEED)?,
        n: cfg
            .parse_value("n")?
            .ok_or_else(|| Error::config("n", "missing required key"))?,
        p_edge: cfg.value_or("p_edge", 0.0f64)?,
        p_in: cfg.value_or("p_in", 0.0f64)?,
        p_out: cfg.value_or("p_out", 0.0f64)?,
        p_bg: cfg.value_or("p_bg", 0.01f64)?,
        block_count: cfg.value_or("block_count", 5usize)?,
        block_size: cfg.value_or("block_size", 50usize)?,
        block_density: cfg.value_or("block_density", 0.2f64)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_key_values_and_comments() {
        let cfg = RawConfig::parse(
            "# experiment\nproblem = pagerank\nn = 40  # nodes\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.get("problem"), Some("pagerank"));
        assert_eq!(cfg.parse_value::<usize>("n").unwrap(), Some(40));
        assert!(cfg.unused_keys().is_empty());
    }

    #[test]
    fn parse_rejects_malformed_lines() {
        assert!(RawConfig::parse("just words\n", Path::new(".")).is_err());
        assert!(RawConfig::parse("a = 1\na = 2\n", Path::new(".")).is_err());
        assert!(RawConfig::parse("a =\n", Path::new(".")).is_err());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let cfg = RawConfig::parse("mystery = 1\n", Path::new(".")).unwrap();
        match cfg.reject_unused() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "mystery"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn scheme_names_parse() {
        assert_eq!(parse_scheme("noiseless", 2).unwrap().0, Scheme::Noiseless);
        assert_eq!(parse_scheme("coded-d3", 2).unwrap(), (Scheme::Coded, 3));
        assert_eq!(
            parse_scheme("replication", 2).unwrap().0,
            Scheme::ReplicationComm
        );
        assert_eq!(
            parse_scheme("gradient-coding", 2).unwrap().0,
            Scheme::ApproxGradientCoding
        );
        assert!(parse_scheme("magic", 2).is_err());
    }

    #[test]
    fn experiment_builds_from_minimal_pagerank_config() {
        let text = "problem = pagerank\ngraph = er\nn = 60\nmean_degree = 8\n\
                    workers = 8\nsplits = 4\nschemes = noiseless,coded-d2\n\
                    iters = 5\nruns = 2\n";
        let cfg = RawConfig::parse(text, Path::new(".")).unwrap();
        let exp = build_experiment(&cfg).unwrap();
        cfg.reject_unused().unwrap();
        assert_eq!(exp.schemes.len(), 2);
        assert_eq!(exp.base.iterations, 5);
        match &exp.instance {
            ProblemInstance::PageRank { problem, split } => {
                assert_eq!(*split, SplitKind::Row);
                assert_eq!(problem.b.n_rows(), 60);
            }
            other => panic!("unexpected instance {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_names_field() {
        let cfg = RawConfig::parse("problem = pagerank\n", Path::new(".")).unwrap();
        match build_experiment(&cfg) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "workers"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn gd_step_auto_uses_lipschitz() {
        let text = "problem = gd\nrows = 40\ndim = 5\nstep = auto\nworkers = 8\nsplits = 4\n\
                    schemes = noiseless\niters = 2\nruns = 1\n";
        let cfg = RawConfig::parse(text, Path::new(".")).unwrap();
        let exp = build_experiment(&cfg).unwrap();
        match &exp.instance {
            ProblemInstance::GradientDescent { problem, step_size } => {
                let want = 0.5 / problem.lipschitz();
                assert!((step_size - want).abs() < 1e-12);
            }
            other => panic!("unexpected instance {other:?}"),
        }
    }

    #[test]
    fn verify_spec_defaults_and_unknown_checks() {
        let cfg = RawConfig::empty();
        let spec = build_verify_spec(&cfg).unwrap();
        assert_eq!(spec.checks.len(), DEFAULT_CHECKS.len());
        assert_eq!(spec.lemma1_samples, 100_000);
        let mut cfg = RawConfig::empty();
        cfg.set("checks", "lemma1,mystery");
        assert!(build_verify_spec(&cfg).is_err());
    }
}
