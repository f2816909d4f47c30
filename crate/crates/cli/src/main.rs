use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mqsd_core::runner::{
    extract_poincare, poincare_tsv, run_meta, run_oracle, summarize, write_outputs, BasisConfig, PreparedRun, RunConfig,
    TrajectoryRecord,
};
use mqsd_core::validation::{run_criteria, ALL_CRITERIA, FAST_SUBSET};

#[derive(Parser)]
#[command(name = "mqsd", version, about = "Quantum state diffusion with a moving basis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `integrator.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides `workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a single trajectory.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Trajectory index within the ensemble (selects the noise stream).
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Integrate all trajectories and write their mean and standard error.
    Ensemble {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Integrate the master equation densely from the configured initial state.
    Oracle {
        #[command(flatten)]
        args: RunArgs,
        /// Fixed-basis capacities; default is the configuration's fixed basis.
        #[arg(long, value_delimiter = ',')]
        capacities: Vec<usize>,
        /// Largest Hilbert-space dimension accepted.
        #[arg(long, default_value_t = 256)]
        limit: usize,
    },
    /// Poincaré section of a trajectory record.
    Poincare {
        /// A `trajectory_<i>.tsv` file.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        period: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        /// Divides both coordinates (the Duffing scale gives classical units).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Output file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run acceptance criteria (the fast subset unless told otherwise).
    Validate {
        /// Run every criterion, including the multi-minute ones.
        #[arg(long, conflicts_with = "criteria")]
        all: bool,
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

fn load(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut config = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.integrator.rng_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    let out = match (&args.out, &config.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => bail!("no output directory: pass --out or set output_dir"),
    };
    config.validate()?;
    Ok((config, out))
}

fn report_failures(records: &[TrajectoryRecord]) -> usize {
    let failed: Vec<_> = records.iter().filter(|r| r.failure.is_some()).collect();
    for r in &failed {
        eprintln!("trajectory {} failed: {}", r.index, r.failure.as_ref().expect("filtered"));
    }
    failed.len()
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(args: &RunArgs, index: u64) -> Result<ExitCode> {
    let (config, out) = load(args)?;
    let record = PreparedRun::new(&config)?.run(index);
    let records = [record];
    print_written(&write_outputs(&out, &config, &records, None)?);
    Ok(if report_failures(&records) > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn ensemble(args: &RunArgs) -> Result<ExitCode> {
    let (config, out) = load(args)?;
    let records = PreparedRun::new(&config)?.run_all()?;
    let failed = report_failures(&records);
    let summary = summarize(&records)?;
    print_written(&write_outputs(&out, &config, &records, Some(&summary))?);
    println!("{} of {} trajectories completed", summary.count, records.len());
    Ok(if failed > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn oracle(args: &RunArgs, capacities: &[usize], limit: usize) -> Result<ExitCode> {
    let (config, out) = load(args)?;
    let caps = match (&config.basis, capacities.is_empty()) {
        (_, false) => capacities.to_vec(),
        (BasisConfig::Fixed { capacities }, true) => capacities.clone(),
        (BasisConfig::Moving(_), true) => bail!("a moving-basis configuration needs --capacities for the oracle"),
    };
    let table = run_oracle(&config, &caps, limit)?;
    std::fs::create_dir_all(&out)?;
    let path = out.join("oracle.tsv");
    std::fs::write(&path, table.to_tsv())?;
    let meta = out.join("run_meta.txt");
    std::fs::write(&meta, format!("oracle capacities\t{caps:?}\n{}", run_meta(&config, &[])))?;
    print_written(&[path, meta]);
    Ok(ExitCode::SUCCESS)
}

fn poincare(record: &Path, period: f64, offset: f64, scale: f64, out: Option<&Path>) -> Result<ExitCode> {
    if !(scale > 0.0 && scale.is_finite()) {
        bail!("scale must be positive, got {scale}");
    }
    let text = std::fs::read_to_string(record).with_context(|| format!("reading {}", record.display()))?;
    let parsed = TrajectoryRecord::from_tsv(0, &text)?;
    let table = poincare_tsv(&extract_poincare(&parsed, period, offset)?, scale);
    match out {
        Some(path) => {
            std::fs::write(path, table)?;
            print_written(&[path.to_path_buf()]);
        }
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(all: bool, criteria: &[u8]) -> Result<ExitCode> {
    let ids: &[u8] = if all {
        &ALL_CRITERIA
    } else if criteria.is_empty() {
        &FAST_SUBSET
    } else {
        criteria
    };
    let reports = run_criteria(ids)?;
    for r in &reports {
        println!("{r}");
    }
    Ok(if reports.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { args, index } => run(&args, index),
        Command::Ensemble { args } => ensemble(&args),
        Command::Oracle { args, capacities, limit } => oracle(&args, &capacities, limit),
        Command::Poincare { record, period, offset, scale, out } => poincare(&record, period, offset, scale, out.as_deref()),
        Command::Validate { all, criteria } => validate(all, &criteria),
    }
}
