use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use har_cli::commands;
use har_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "har",
    about = "Self-supervised pre-training, baselines, and explainability for wearable accelerometer activity recognition",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-command overrides as key=value.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled/unlabelled window store.
    Synth(Common),
    /// Ingest time,x,y,z[,label] CSV files into a window store.
    Ingest(Common),
    /// Multi-task self-supervised pre-training.
    Pretrain(Common),
    /// Fine-tune a pre-trained checkpoint over the CV plan.
    Finetune(Common),
    /// Train the same architecture from scratch over the CV plan.
    Scratch(Common),
    /// Supervised pre-training on a source store, then fine-tuning.
    Transfer(Common),
    /// Random-forest baseline on hand-crafted features.
    Rf(Common),
    /// Evaluate a trained model per subject.
    Eval(Common),
    /// Attribution maps and scalogram panels for one window.
    Explain(Common),
    /// Masking-faithfulness degradation curves.
    Mask(Common),
    /// Labelled-subject-volume ablation curves.
    Ablate(Common),
    /// Write trunk feature vectors for external projection.
    ExportEmbeddings(Common),
}

fn dispatch(command: &Command) -> Result<(), har_cli::CliError> {
    let (common, run): (&Common, fn(&mut RunConfig) -> Result<(), har_cli::CliError>) =
        match command {
            Command::Synth(c) => (c, commands::cmd_synth),
            Command::Ingest(c) => (c, commands::cmd_ingest),
            Command::Pretrain(c) => (c, commands::cmd_pretrain),
            Command::Finetune(c) => (c, commands::cmd_finetune),
            Command::Scratch(c) => (c, commands::cmd_scratch),
            Command::Transfer(c) => (c, commands::cmd_transfer),
            Command::Rf(c) => (c, commands::cmd_rf),
            Command::Eval(c) => (c, commands::cmd_eval),
            Command::Explain(c) => (c, commands::cmd_explain),
            Command::Mask(c) => (c, commands::cmd_mask),
            Command::Ablate(c) => (c, commands::cmd_ablate),
            Command::ExportEmbeddings(c) => (c, commands::cmd_export_embeddings),
        };
    let mut cfg = RunConfig::from_sources(
        common.config.as_deref(),
        &common.overrides,
        common.seed,
        common.out.as_deref(),
    )?;
    run(&mut cfg)
}

fn main() -> ExitCode {
    // HAR_THREADS caps internal parallelism; results are identical at any
    // thread count.
    if let Ok(threads) = std::env::var("HAR_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
