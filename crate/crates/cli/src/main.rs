//! Command-line entry point. Exit codes: 0 success, 1 usage error,
//! 2 data/integrity error.

use clap::{Parser, Subcommand};
use mmresgnn_cli::commands::{
    ablate_cmd, eval_cmd, fit_baseline_cmd, gen_data, report_cmd, train_cmd, transfer_cmd,
    AblateArgs, EvalArgs, GenDataArgs, TrainArgs, TransferArgs,
};
use mmresgnn_core::scene::ScenarioKind;
use mmresgnn_harness::metrics::SplitKind;
use mmresgnn_harness::transfer::TransferStrategy;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mmresgnn",
    about = "Synthetic vehicular mmWave path-loss datasets and the residual-corrected multi-modal graph model",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        snapshots: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num_rx: Option<usize>,
        #[arg(long)]
        num_vehicles: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_corr: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
    },
    /// Fit the physical baseline on the training split.
    FitBaseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a learned variant and save a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a list of variants (or `all`) and write a combined report.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        fit_abg: bool,
    },
    /// Cross-scenario transfer with few-shot subsampling.
    Transfer {
        #[arg(long)]
        source_ckpt: Option<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_ckpt: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Merge report files into comparison tables and plots.
    Report {
        #[arg(long = "in", value_delimiter = ',')]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        plots: PathBuf,
    },
}

fn run(command: Command) -> mmresgnn_cli::Result<()> {
    match command {
        Command::GenData {
            scenario,
            snapshots,
            seed,
            out,
            num_rx,
            num_vehicles,
            k,
            k_corr,
            image_size,
        } => {
            let scenario: ScenarioKind = scenario
                .parse()
                .map_err(mmresgnn_cli::CliError::Usage)?;
            gen_data(&GenDataArgs {
                scenario,
                snapshots,
                seed,
                out,
                num_rx,
                num_vehicles,
                k,
                k_corr,
                image_size,
            })
        }
        Command::FitBaseline { data, out, seed } => fit_baseline_cmd(&data, &out, seed),
        Command::Train {
            data,
            variant,
            config,
            out,
            seed,
            epochs,
        } => train_cmd(&TrainArgs {
            data,
            variant,
            config,
            out,
            seed,
            epochs,
        }),
        Command::Eval {
            ckpt,
            data,
            split,
            report,
            seed,
        } => {
            let split: SplitKind = split.parse().map_err(mmresgnn_cli::CliError::Usage)?;
            eval_cmd(&EvalArgs {
                ckpt,
                data,
                split,
                report,
                seed,
            })
        }
        Command::Ablate {
            data,
            variants,
            report,
            seed,
            epochs,
            fit_abg,
        } => {
            if variants.is_empty() {
                return Err(mmresgnn_cli::CliError::Usage(
                    "--variants requires at least one variant id or `all`".into(),
                ));
            }
            ablate_cmd(&AblateArgs {
                data,
                variants,
                report,
                seed,
                epochs,
                fit_abg,
            })
        }
        Command::Transfer {
            source_ckpt,
            target,
            strategy,
            ratio,
            report,
            out_ckpt,
            seed,
            epochs,
        } => {
            let strategy: TransferStrategy =
                strategy.parse().map_err(mmresgnn_cli::CliError::Usage)?;
            transfer_cmd(&TransferArgs {
                source_ckpt,
                target,
                strategy,
                ratio,
                report,
                out_ckpt,
                seed,
                epochs,
            })
        }
        Command::Report { inputs, plots } => {
            if inputs.is_empty() {
                return Err(mmresgnn_cli::CliError::Usage("--in requires at least one report".into()));
            }
            report_cmd(&inputs, &plots)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
