use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use subdecode::config::{build_experiment, build_gen_spec, build_verify_spec, RawConfig};
use subdecode::problems::{gen_er, gen_planted, gen_sbm, write_edge_list};
use subdecode::seeding::{mix, stream, tag};
use subdecode::simharness::{aggregate_traces, run_experiment};
use subdecode::verify;
use subdecode::Error;

/// Simulator and verification driver for erasure-coded iterative computing
/// with substitute decoding.
#[derive(Parser)]
#[command(name = "subdecode", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment; writes one CSV trace per scheme.
    Run {
        /// Experiment config file (`key = value` lines, `#` comments).
        #[arg(long)]
        config: PathBuf,
        /// Master seed override (defaults to the config value).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for the per-scheme CSV files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Scheme override, repeatable (e.g. --scheme coded-d2).
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        /// Independent-runs override.
        #[arg(long)]
        runs: Option<usize>,
        /// Iteration-count override.
        #[arg(long)]
        iters: Option<usize>,
        /// Load the sparsity pattern from a `{0,1}`-text file instead of
        /// deriving it from the seed.
        #[arg(long)]
        pattern_file: Option<PathBuf>,
    },
    /// Run verification checks and write a report CSV. Exits with status 2
    /// if any check fails.
    Verify {
        /// Optional config file with check parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Check selection, repeatable (defaults to the standard suite).
        #[arg(long = "check")]
        checks: Vec<String>,
    },
    /// Generate a graph or matrix file with a recorded seed.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            schemes,
            runs,
            iters,
            pattern_file,
        } => cmd_run(
            &config,
            seed,
            &out,
            &schemes,
            runs,
            iters,
            pattern_file.as_deref(),
        ),
        Command::Verify {
            config,
            seed,
            out,
            checks,
        } => cmd_verify(config.as_deref(), seed, &out, &checks),
        Command::Gen { config, seed, out } => cmd_gen(&config, seed, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn write_file(path: &Path, contents: &str) -> subdecode::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    scheme_overrides: &[String],
    runs: Option<usize>,
    iters: Option<usize>,
    pattern_file: Option<&Path>,
) -> subdecode::Result<ExitCode> {
    let mut raw = RawConfig::load(config)?;
    if let Some(seed) = seed {
        raw.set("seed", seed.to_string());
    }
    if let Some(runs) = runs {
        raw.set("runs", runs.to_string());
    }
    if let Some(iters) = iters {
        raw.set("iters", iters.to_string());
    }
    if !scheme_overrides.is_empty() {
        raw.set("schemes", scheme_overrides.join(","));
    }
    if let Some(p) = pattern_file {
        raw.set("pattern_file", p.display().to_string());
    }
    let experiment = build_experiment(&raw)?;
    raw.reject_unused()?;

    println!(
        "running {} | {} schemes, {} runs x {} iterations, seed {}",
        experiment.problem_label,
        experiment.schemes.len(),
        experiment.base.runs,
        experiment.base.iterations,
        experiment.base.master_seed
    );
    println!(
        "{:<22} {:>14} {:>13} {:>13} {:>11}",
        "scheme", "comm/iter", "error_mean", "error_std", "delta_mean"
    );
    for &(scheme, degree) in &experiment.schemes {
        let mut cfg = experiment.base.clone();
        cfg.scheme = scheme;
        cfg.degree = degree;
        let traces = run_experiment(&experiment.instance, &cfg)?;
        let agg = aggregate_traces(&traces)?;
        let label = scheme.label(degree);
        let path = out.join(format!("{label}.csv"));
        write_file(&path, &agg.to_csv())?;
        let last = agg.rows.last().expect("at least the initial record");
        let per_iter = if agg.rows.len() > 1 {
            agg.rows[1].comm_cost - agg.rows[0].comm_cost
        } else {
            0.0
        };
        println!(
            "{:<22} {:>14.1} {:>13.6e} {:>13.6e} {:>11.4}",
            label, per_iter, last.error_mean, last.error_std, last.delta_mean
        );
    }
    println!("traces written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    check_overrides: &[String],
) -> subdecode::Result<ExitCode> {
    let mut raw = match config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::empty(),
    };
    if let Some(seed) = seed {
        raw.set("seed", seed.to_string());
    }
    if !check_overrides.is_empty() {
        raw.set("checks", check_overrides.join(","));
    }
    let spec = build_verify_spec(&raw)?;
    raw.reject_unused()?;

    let reports = run_checks(&spec)?;
    let mut csv = String::from(verify::CSV_HEADER);
    let mut all_pass = true;
    for report in &reports {
        print!("{}", report.render_text());
        csv.push_str(&report.csv_rows());
        all_pass &= report.pass;
    }
    write_file(&out.join("verify.csv"), &csv)?;
    println!("report written to {}", out.join("verify.csv").display());
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn run_checks(
    spec: &subdecode::config::VerifySpec,
) -> subdecode::Result<Vec<verify::VerificationReport>> {
    use subdecode::codes::SparsityPattern;
    use subdecode::simharness::ErasureModel;

    let erasure = ErasureModel::fixed_fraction(0.5)?;
    let mut reports = Vec::new();
    for check in &spec.checks {
        match check.as_str() {
            "table1" => {
                let mut rng = stream(mix(spec.seed, tag("table1")));
                reports.push(verify::check_table1(spec.table1_samples, &mut rng)?);
            }
            "lemma1" => {
                for d in [2usize, 3] {
                    let mut rng = stream(mix(spec.seed, tag("lemma1") ^ d as u64));
                    let pattern = SparsityPattern::combined_cyclic(10, d, &mut rng)?;
                    let mut report = verify::check_lemma1(
                        &pattern,
                        &erasure,
                        spec.lemma1_samples,
                        verify::Lemma1Thresholds::default(),
                        &mut rng,
                    )?;
                    report.check = format!("lemma1-d{d}");
                    reports.push(report);
                }
            }
            "theorem1" => {
                for d in [2usize, 3] {
                    let mut rng = stream(mix(spec.seed, tag("theorem1") ^ d as u64));
                    let b = verify::synthetic_contraction(10, 0.85, &mut rng)?;
                    let pattern = SparsityPattern::combined_cyclic(10, d, &mut rng)?;
                    let mut report = verify::check_theorem1(
                        &b,
                        &pattern,
                        &erasure,
                        spec.theorem_runs,
                        spec.theorem_iters,
                        &mut rng,
                    )?;
                    report.check = format!("theorem1-d{d}");
                    reports.push(report);
                }
            }
            "theorem2" => {
                let mut rng = stream(mix(spec.seed, tag("theorem2")));
                let b = verify::synthetic_column_contraction(16, 8, 0.9, &mut rng)?;
                let pattern = SparsityPattern::combined_cyclic(8, 2, &mut rng)?;
                reports.push(verify::check_theorem2(
                    &b,
                    &pattern,
                    &erasure,
                    spec.theorem_runs,
                    spec.theorem_iters,
                    &mut rng,
                )?);
            }
            "norm-lemmas" => {
                let mut rng = stream(mix(spec.seed, tag("norm-lemmas")));
                reports.push(verify::check_norm_lemmas(
                    spec.norm_n,
                    spec.norm_p,
                    spec.norm_eps,
                    spec.norm_k,
                    spec.norm_graphs,
                    &mut rng,
                )?);
            }
            other => {
                return Err(Error::config("checks", format!("unknown check {other:?}")));
            }
        }
    }
    Ok(reports)
}

fn cmd_gen(config: &Path, seed: Option<u64>, out: &Path) -> subdecode::Result<ExitCode> {
    let mut raw = RawConfig::load(config)?;
    if let Some(seed) = seed {
        raw.set("seed", seed.to_string());
    }
    let spec = build_gen_spec(&raw)?;
    raw.reject_unused()?;

    let mut rng = stream(mix(spec.seed, tag("gen")));
    let mut meta = format!("kind = {}\nseed = {}\nn = {}\n", spec.kind, spec.seed, spec.n);
    match spec.kind.as_str() {
        "er" => {
            let adj = gen_er(spec.n, spec.p_edge, &mut rng)?;
            meta.push_str(&format!("p_edge = {}\n", spec.p_edge));
            write_file(&out.join("er.edges"), &write_edge_list(&adj))?;
            write_file(&out.join("er.meta"), &meta)?;
            println!(
                "wrote {} ({} edges)",
                out.join("er.edges").display(),
                adj.nnz() / 2
            );
        }
        "sbm" => {
            let (adj, labels) = gen_sbm(spec.n, spec.p_in, spec.p_out, &mut rng)?;
            meta.push_str(&format!("p_in = {}\np_out = {}\n", spec.p_in, spec.p_out));
            write_file(&out.join("sbm.edges"), &write_edge_list(&adj))?;
            let label_text: String = labels.iter().map(|l| format!("{l}\n")).collect();
            write_file(&out.join("sbm.labels"), &label_text)?;
            write_file(&out.join("sbm.meta"), &meta)?;
            println!("wrote {} (+labels)", out.join("sbm.edges").display());
        }
        "planted" => {
            let blocks = vec![(spec.block_size, spec.block_density); spec.block_count];
            let m = gen_planted(spec.n, spec.p_bg, &blocks, &mut rng)?;
            meta.push_str(&format!(
                "p_bg = {}\nblock_count = {}\nblock_size = {}\nblock_density = {}\n",
                spec.p_bg, spec.block_count, spec.block_size, spec.block_density
            ));
            let mut text = String::new();
            for (i, j, v) in m.entries() {
                text.push_str(&format!("{i} {j} {v}\n"));
            }
            write_file(&out.join("planted.matrix"), &text)?;
            write_file(&out.join("planted.meta"), &meta)?;
            println!("wrote {}", out.join("planted.matrix").display());
        }
        _ => unreachable!("validated by build_gen_spec"),
    }
    Ok(ExitCode::SUCCESS)
}
