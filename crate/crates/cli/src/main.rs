//! `annilab`: kinetic Monte Carlo experiments for two-type annihilating
//! random walks, with statistical verification against exact solvers and
//! Gaussian limit targets.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
//! 3 runtime fault.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use annilab_cli::acceptance::{run_suite, Selector};
use annilab_cli::config::{ConfigError, ExperimentConfig, ExperimentKind};
use annilab_cli::experiments::{run_experiment, RunError};
use annilab_cli::report::write_artifacts;
use annilab_cli::runner::configure_threads;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Human-readable summary plus metric CSV on stdout.
    Csv,
    /// Full report JSON on stdout.
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "annilab",
    about = "Kinetic Monte Carlo laboratory for two-type annihilating random walks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Parser)]
struct RunArgs {
    /// Experiment config file (flat TOML); defaults are built in per kind.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count override (0 = auto).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a plain simulation and export snapshots.
    Simulate(RunArgs),
    /// Density decay scan with rescaled amplitude checks.
    DensityScan(RunArgs),
    /// Macroscopic scaled-block Gaussianity test.
    Theorem1(RunArgs),
    /// Sample-path agreement of blocks with the smoothed initial field.
    Theorem3(RunArgs),
    /// Microscopic Poisson-mixture structure test.
    Microscale(RunArgs),
    /// Tiled minority-fraction segregation trend.
    Segregation(RunArgs),
    /// Engine certification against the exact transient solver.
    OracleCheck(RunArgs),
    /// Kernel normalization, variance, composition, and gap scan.
    KernelScan(RunArgs),
    /// Brownian-sheet, white-noise, and smoothed-field verification.
    GaussianCheck(RunArgs),
    /// Run the acceptance criteria.
    Accept {
        /// `all` or `fast` (fast skips the t=4096 runs).
        #[arg(long, default_value = "all")]
        selector: String,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default_for(kind),
    };
    if cfg.kind != kind {
        return Err(ConfigError::Invalid {
            field: "kind",
            reason: format!(
                "config file is for `{}`, but the `{}` subcommand was invoked",
                cfg.kind, kind
            ),
        });
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn run_kind(kind: ExperimentKind, args: &RunArgs) -> ExitCode {
    let cfg = match load_config(kind, args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }
    configure_threads(cfg.resolved_threads());
    let start = Instant::now();
    let output = match run_experiment(&cfg) {
        Ok(output) => output,
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("runtime fault: {e}");
            return ExitCode::from(3);
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let out_dir = PathBuf::from(&cfg.out_dir);
    let manifest = output.manifest(&cfg);
    let series: Vec<_> = output.series.iter().collect();
    if let Err(e) = write_artifacts(&out_dir, &output.report, &manifest, &series) {
        eprintln!("runtime fault: {e}");
        return ExitCode::from(3);
    }
    for (name, bytes) in &output.extra_files {
        if let Err(e) = std::fs::write(out_dir.join(name), bytes) {
            eprintln!("runtime fault: cannot write {name}: {e}");
            return ExitCode::from(3);
        }
    }
    match args.format {
        OutputFormat::Csv => {
            print!("{}", output.report.render_summary(Some(wall)));
            for s in &output.series {
                let mut buf = Vec::new();
                if s.write_csv(&mut buf).is_ok() {
                    println!("-- {}.csv --", s.name());
                    print!("{}", String::from_utf8_lossy(&buf));
                }
            }
        }
        OutputFormat::Json => println!("{}", output.report.to_json()),
    }
    eprintln!("artifacts written to {}", out_dir.display());
    if output.report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run_accept(selector: &str, threads: Option<usize>, out: Option<PathBuf>) -> ExitCode {
    let selector: Selector = match selector.parse() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let threads = threads.unwrap_or_else(|| {
        ExperimentConfig::default_for(ExperimentKind::DensityScan).resolved_threads()
    });
    configure_threads(threads);
    let start = Instant::now();
    match run_suite(selector, out.as_deref(), true) {
        Ok(report) => {
            println!(
                "acceptance: {} ({} criteria, {:.1} s)",
                if report.pass { "PASS" } else { "FAIL" },
                report.criteria.len(),
                start.elapsed().as_secs_f64()
            );
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("runtime fault: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => run_kind(ExperimentKind::Simulate, &args),
        Command::DensityScan(args) => run_kind(ExperimentKind::DensityScan, &args),
        Command::Theorem1(args) => run_kind(ExperimentKind::Theorem1, &args),
        Command::Theorem3(args) => run_kind(ExperimentKind::Theorem3, &args),
        Command::Microscale(args) => run_kind(ExperimentKind::Microscale, &args),
        Command::Segregation(args) => run_kind(ExperimentKind::Segregation, &args),
        Command::OracleCheck(args) => run_kind(ExperimentKind::OracleCheck, &args),
        Command::KernelScan(args) => run_kind(ExperimentKind::KernelScan, &args),
        Command::GaussianCheck(args) => run_kind(ExperimentKind::GaussianCheck, &args),
        Command::Accept {
            selector,
            threads,
            out,
        } => run_accept(&selector, threads, out),
    }
}
