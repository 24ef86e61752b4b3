use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qd::benchmarks::{bates_narrowing_report, ObjectiveFunction};
use qd::harness::{
    load_suite_config, render_table, run_suite, run_trial, Algorithm, ExperimentConfig,
    RunOptions, SuiteRow,
};

#[derive(Parser)]
#[command(
    name = "qd",
    version,
    about = "Quality-diversity optimization on the linear-projection benchmark domain"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration for one or more seeded trials.
    Run(Box<RunArgs>),
    /// Run a declarative suite of experiments and emit a comparison table.
    Suite(SuiteArgs),
    /// Measure behavior-space coverage of uniform sampling across dimensions.
    Bates(BatesArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    #[arg(long, value_enum)]
    function: ObjectiveFunction,
    /// Search-space dimension.
    #[arg(long)]
    dim: usize,
    /// Total evaluation budget.
    #[arg(long)]
    evals: u64,
    /// Archive cells per behavior dimension.
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Initial mutation power / step size.
    #[arg(long, default_value_t = 0.5)]
    sigma0: f64,
    /// Emitter count (CMA-ME algorithms only).
    #[arg(long, default_value_t = 15)]
    emitters: usize,
    /// Population size per generation (per emitter for CMA-ME).
    #[arg(long, default_value_t = 37)]
    lambda: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for metrics.csv, summary.json, archive.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluations between metrics snapshots.
    #[arg(long, default_value_t = 1000)]
    snapshot_interval: u64,
    /// Trials to run; trial t uses seed + t and its own subdirectory.
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Uniform bootstrap draws before MAP-Elites perturbation starts.
    #[arg(long, default_value_t = 100)]
    initial_population: usize,
    /// Directional scale of the line-mutation operator.
    #[arg(long, default_value_t = 0.2)]
    line_sigma: f64,
    /// Evaluate batches on a thread pool (outputs are identical either way).
    #[arg(long)]
    parallel: bool,
    /// Write zeros to wall-time columns for byte-reproducible outputs.
    #[arg(long)]
    fixed_timing: bool,
    /// Also dump elite search points to genomes.txt.
    #[arg(long)]
    dump_genomes: bool,
}

#[derive(Args)]
struct SuiteArgs {
    /// TOML file with one [[experiments]] table per configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for per-trial artifacts and the suite reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    fixed_timing: bool,
}

#[derive(Args)]
struct BatesArgs {
    /// Search dimensions to sample, comma separated (e.g. 20,100).
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 500)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for bates.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Suite(args) => suite(args),
        Command::Bates(args) => bates(args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let options = RunOptions {
        parallel: args.parallel,
        fixed_timing: args.fixed_timing,
        dump_genomes: args.dump_genomes,
    };
    let mut config = ExperimentConfig::new(args.algorithm, args.function, args.dim, args.evals);
    config.resolution = args.resolution;
    config.sigma0 = args.sigma0;
    config.emitter_count = args.emitters;
    config.lambda = args.lambda;
    config.seed = args.seed;
    config.snapshot_interval = args.snapshot_interval;
    config.trials = args.trials;
    config.initial_population = args.initial_population;
    config.line_sigma = args.line_sigma;

    if args.trials == 1 {
        config.output_dir = args.out.clone();
        let result = run_trial(&config, &options).context("trial failed")?;
        println!(
            "{} {} n={} evals={} seed={}: qd_score={:.1} coverage={:.2}% max_fitness={:.3} cells={}",
            config.algorithm,
            config.function,
            config.dim,
            result.evaluations,
            result.seed,
            result.qd_score,
            result.coverage * 100.0,
            result.max_fitness,
            result.cells_occupied
        );
        if result.flagged > 0 {
            eprintln!(
                "warning: {} evaluations were non-finite and skipped",
                result.flagged
            );
        }
        return Ok(());
    }

    let rows = run_suite(std::slice::from_ref(&config), args.out.as_deref(), &options)
        .context("trials failed")?;
    print!("{}", render_table(&rows));
    Ok(())
}

fn suite(args: SuiteArgs) -> Result<()> {
    let configs = load_suite_config(&args.config)
        .with_context(|| format!("loading suite config {}", args.config.display()))?;
    let options = RunOptions {
        parallel: args.parallel,
        fixed_timing: args.fixed_timing,
        dump_genomes: false,
    };
    let rows = run_suite(&configs, args.out.as_deref(), &options).context("suite failed")?;
    print!("{}", render_table(&rows));
    let failures: u32 = rows
        .iter()
        .map(|r| r.trials_requested - r.trials_completed)
        .sum();
    if failures > 0 {
        anyhow::bail!("{failures} trial(s) failed; see suite report");
    }
    Ok(())
}

fn bates(args: BatesArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rows = bates_narrowing_report(&args.dims, args.samples, args.resolution, &mut rng);
    let mut csv = String::from("n,cells_hit,total_cells,coverage\n");
    println!(
        "{:>6} {:>12} {:>14} {:>10}",
        "n", "cells_hit", "total_cells", "coverage"
    );
    for row in &rows {
        println!(
            "{:>6} {:>12} {:>14} {:>10.6}",
            row.n, row.cells_hit, row.total_cells, row.coverage
        );
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.n, row.cells_hit, row.total_cells, row.coverage
        ));
    }
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("bates.csv"), csv)?;
    }
    Ok(())
}
