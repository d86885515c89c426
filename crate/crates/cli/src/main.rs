use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nmrom::exec::with_workers;
use nmrom::Execution;
use nmrom_cli::error::EXIT_OK;
use nmrom_cli::{run, CliError, Command, Invocation, LoadedConfig};

/// Worker count for `--sweep`.
const WORKERS_ENV: &str = "NMROM_WORKERS";

#[derive(Parser)]
#[command(name = "nmrom", version, about = "Nonlinear modal reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Continue the modal table over the amplitude grid.
    Nma(Opts),
    /// Integrate the slow flow and synthesize the response.
    Slowflow(Opts),
    /// Integrate the full equations of motion.
    Direct(Opts),
    /// Steady-state forced responses over a frequency grid.
    Steady(Opts),
    /// Project a physical state onto the manifold.
    Project(Opts),
    /// Compare the envelopes of two run directories.
    Compare(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment config; repeat with --sweep.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Modal table CSV (default: table.csv in the output directory).
    #[arg(long)]
    table: Option<PathBuf>,
    /// Run every config into its own subdirectory of --out, in parallel.
    #[arg(long)]
    sweep: bool,
}

fn execute(cmd: Command, config: &Path, out: &Path, table: Option<&Path>) -> Result<String, CliError> {
    let config = LoadedConfig::load(config)?;
    run(
        cmd,
        &Invocation {
            config: &config,
            out,
            table,
        },
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, opts) = match cli.command {
        Cmd::Nma(o) => (Command::Nma, o),
        Cmd::Slowflow(o) => (Command::SlowFlow, o),
        Cmd::Direct(o) => (Command::Direct, o),
        Cmd::Steady(o) => (Command::Steady, o),
        Cmd::Project(o) => (Command::Project, o),
        Cmd::Compare(o) => (Command::Compare, o),
    };
    if !opts.sweep && opts.config.len() > 1 {
        eprintln!("error: several configs need --sweep");
        return ExitCode::from(nmrom_cli::error::EXIT_CONFIG as u8);
    }
    let jobs: Vec<(PathBuf, PathBuf)> = opts
        .config
        .iter()
        .map(|c| {
            let out = if opts.sweep {
                opts.out.join(c.file_stem().unwrap_or_default())
            } else {
                opts.out.clone()
            };
            (c.clone(), out)
        })
        .collect();
    let workers = match std::env::var(WORKERS_ENV) {
        Err(_) => None,
        Ok(s) => match s.parse::<usize>() {
            Ok(n) => Some(n),
            Err(_) => {
                eprintln!("error: {WORKERS_ENV} must be a non-negative integer");
                return ExitCode::from(nmrom_cli::error::EXIT_CONFIG as u8);
            }
        },
    };
    let results = with_workers(workers, || {
        Execution::Parallel.map(&jobs, |(config, out)| execute(cmd, config, out, opts.table.as_deref()))
    });
    let mut code = EXIT_OK;
    for ((config, _), result) in jobs.iter().zip(results) {
        match result {
            Ok(summary) => println!("{} {}: {summary}", cmd.name(), config.display()),
            Err(e) => {
                eprintln!("error: {} {}: {e}", cmd.name(), config.display());
                code = code.max(e.code);
            }
        }
    }
    ExitCode::from(code as u8)
}
