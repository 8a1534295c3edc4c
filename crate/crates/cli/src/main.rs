use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retrolearn::trainer::Method;
use retrolearn_cli::results::{robustness_text, summary_text};
use retrolearn_cli::{cmd_report, cmd_robustness, cmd_run, cmd_sweep, CliError, CommonArgs};

#[derive(Parser)]
#[command(name = "retrolearn", version, about = "Train classifiers with learning-with-retrospection soft labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run(Flags),
    /// LWR over a τ × k × seed grid.
    Sweep(Flags),
    /// Methods × label-noise rates × seeds.
    Robustness(Flags),
    /// Re-aggregate an existing results.csv.
    Report {
        /// Directory holding results.csv; aggregates are written here.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Read raw rows from this file instead.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Flags {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed (falls back to run.seed, then RETROLEARN_SEED, then 0).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    /// Dotted config override, e.g. method.tau=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for multi-run commands.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Override method.name (STD, LSR, MaxEntropy, LWR).
    #[arg(long)]
    method: Option<String>,
}

impl Flags {
    fn common(self) -> Result<CommonArgs, CliError> {
        let method = self
            .method
            .map(|m| m.parse::<Method>().map_err(|e| CliError::config(e.to_string())))
            .transpose()?;
        Ok(CommonArgs {
            config: self.config,
            seed: self.seed,
            out: self.out,
            overrides: self.overrides,
            jobs: self.jobs.max(1),
            method,
        })
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(f) => cmd_run(&f.common()?).map(|o| println!("{}", o.out_dir.display())),
        Command::Sweep(f) => cmd_sweep(&f.common()?).map(|t| print!("{}", summary_text(&t.aggregates))),
        Command::Robustness(f) => cmd_robustness(&f.common()?).map(|t| {
            print!("{}\n{}", summary_text(&t.aggregates), robustness_text(&t.aggregates))
        }),
        Command::Report { out, input } => {
            cmd_report(&out, input.as_deref()).map(|aggs| print!("{}", summary_text(&aggs)))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("retrolearn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
