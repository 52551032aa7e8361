use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_iterates_cli::commands;
use levy_iterates_cli::{CliError, CliResult, ExperimentConfig, Overrides, Profile};

#[derive(Parser, Debug)]
#[command(name = "levy-iter", version, about = "Single-batch Monte Carlo iterates: banks, tables, figures, sweeps")]
struct Cli {
    /// Experiment configuration file (flat `section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the bank files.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// Directory the CSV files are written to.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scale preset: desk or paper.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Base seed of every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate and store one bank per stability index.
    Bank,
    /// Reproduce table 1-4 as CSV.
    Table { id: u32 },
    /// Write the time series of figure 1-3 as CSV.
    Figure { id: u32 },
    /// Evaluate the iterates over the query grid against one stored bank.
    Sweep,
    /// Run the sampler and covariance oracle suites.
    Validate,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let overrides = Overrides {
        profile: cli.profile.as_deref().map(str::parse::<Profile>).transpose()?,
        seed: cli.seed,
        bank_dir: cli.bank,
        out_dir: cli.out,
    };
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Bank => {
            for summary in commands::cmd_bank(&cfg)? {
                println!("{summary}");
            }
        }
        Command::Table { id } => {
            for path in commands::cmd_table(&cfg, id)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Figure { id } => {
            for path in commands::cmd_figure(&cfg, id)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Sweep => {
            let outcome = commands::cmd_sweep(&cfg)?;
            println!(
                "rows={} invalid={} failed={} bank_loads={}",
                outcome.results.rows.len(),
                outcome.invalid,
                outcome.failed,
                outcome.bank_loads
            );
            if outcome.failed > 0 {
                return Err(CliError::Numerical(format!("{} sweep rows hit a non-finite value", outcome.failed)));
            }
        }
        Command::Validate => {
            let checks = commands::cmd_validate(&cfg)?;
            for check in &checks {
                println!("{check}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Numerical(format!("{failed} validation checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("levy-iter: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
