use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sgcol_core::experiment::{compare_report, run_experiment, ExperimentConfig, RunOptions};
use sgcol_core::nodes::{node_sequence, write_node_table, NodeKind};
use sgcol_core::{selftest, Error};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;
const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sgcol",
    version,
    about = "Adaptive sparse-grid collocation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategies of a JSON experiment configuration.
    Run {
        /// Configuration file.
        #[arg(required_unless_present = "print_defaults")]
        config: Option<PathBuf>,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// Worker threads (overrides the configuration).
        #[arg(long)]
        parallelism: Option<usize>,
        /// Compute the reference error at every iteration regardless of dimension.
        #[arg(long)]
        force_reference: bool,
        /// Print the default configuration and exit.
        #[arg(long)]
        print_defaults: bool,
    },
    /// Tabulate reference error against cumulative PDE solves for several traces.
    Compare {
        traces: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the first n nodes of a family as CSV.
    Nodes { kind: NodeKind, n: usize },
    /// Run the fast consistency checks.
    Selftest,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::Ellipticity { .. }
            | Error::Json(_)
            | Error::ReferenceInfeasible { .. }
            | Error::DimensionMismatch { .. },
        ) => EXIT_CONFIG,
        Some(Error::Usage(_)) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn print_defaults() -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(&ExperimentConfig::default())?;
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(())
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || matches!(e.downcast_ref::<Error>(), Some(Error::Io(io)) if io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Run {
            config,
            outdir,
            parallelism,
            force_reference,
            print_defaults: defaults,
        } => {
            if defaults {
                print_defaults()?;
                return Ok(0);
            }
            let path = config.expect("clap enforces the config argument");
            let cfg = ExperimentConfig::load(&path)?;
            let opts = RunOptions {
                outdir,
                parallelism,
                force_reference,
            };
            let summary = run_experiment(&cfg, &opts)?;
            for s in &summary.strategies {
                let err = s
                    .terminal_error
                    .map_or("-".to_string(), |e| format!("{e:.3e}"));
                eprintln!(
                    "{}: {:?} after {} iterations, {} solves, total estimator {:.3e}, reference error {}",
                    s.strategy, s.status, s.iterations, s.solves, s.total_estimator, err
                );
            }
            Ok(summary.exit_code() as u8)
        }
        Command::Compare { traces, csv } => {
            let table = compare_report(&traces)?;
            write!(io::stdout().lock(), "{table}")?;
            if let Some(path) = csv {
                let file =
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                table.write_csv(BufWriter::new(file))?;
            }
            Ok(0)
        }
        Command::Nodes { kind, n } => {
            let mut table = Vec::new();
            write_node_table(&mut table, &node_sequence(kind, n))?;
            io::stdout().lock().write_all(&table)?;
            Ok(0)
        }
        Command::Selftest => {
            let results = selftest::run_all();
            let mut out = io::stdout().lock();
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{tag} {} ({})", r.name, r.detail)?;
            }
            Ok(if results.iter().all(|r| r.passed) {
                0
            } else {
                EXIT_FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // per-iteration progress only for runs; other commands stay quiet
    let level = if matches!(cli.command, Command::Run { .. }) {
        "info"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
