//! `fcn`: synthesize data, train, evaluate, predict, inspect and verify.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::EXIT_USAGE;

#[derive(Parser)]
#[command(name = "fcn", version, about = "Fusing cross network for CTR prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a parity workload as train/valid/test CSVs plus a latent sidecar.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        fields: usize,
        #[arg(long, default_value_t = 10)]
        cardinality: usize,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 50_000)]
        rows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train and write the best checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long = "out-checkpoint")]
        out_checkpoint: PathBuf,
    },
    /// Print AUC and logloss of a checkpoint on labeled data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Write fused and per-branch predictions for every input row.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Export per-field cross strength, mask sparsity and pair importance.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layer: usize,
        /// `ecn` or `lcn`.
        #[arg(long)]
        branch: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run verification suites; exits 3 if any check fails.
    Verify {
        #[arg(long, default_value = "all", value_parser = ["grad", "degree", "auc", "mask", "all"])]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth {
            out,
            fields,
            cardinality,
            order,
            rows,
            seed,
        } => commands::synth(&commands::SynthArgs {
            out,
            fields,
            cardinality,
            order,
            rows,
            seed,
        }),
        Command::Train {
            config,
            train,
            valid,
            out_checkpoint,
        } => commands::train_cmd(config.as_deref(), &train, &valid, &out_checkpoint),
        Command::Eval { checkpoint, data } => commands::eval(&checkpoint, &data),
        Command::Predict {
            checkpoint,
            input,
            output,
        } => commands::predict(&checkpoint, &input, &output),
        Command::Inspect {
            checkpoint,
            data,
            layer,
            branch,
            out,
        } => commands::inspect(&checkpoint, &data, layer, &branch, &out),
        Command::Verify { suite, seed } => commands::verify(&suite, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
