use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use vbp_cli::commands;
use vbp_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "vbp",
    about = "Stochastic multiple-timescale RNN experiments: synthesize data, train \
             sweeps over the meta-prior W, generate, classify, and analyze",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Complete configuration file (overrides --preset).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: `desk` (workstation scale) or `paper` (full scale).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Master seed; every derived stream is tagged from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent runs (sweeps). Every run is
    /// deterministic either way; 1 keeps even the log write order fixed.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl Common {
    fn resolve(&self) -> Result<(RunConfig, u64)> {
        let cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::preset(&self.preset)?,
        };
        let seed = self.seed.unwrap_or(cfg.seed);
        Ok((cfg, seed))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize training data: grammar labels, rendered patterns, target
    /// generator, fluctuated targets, and the label classifier.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Skip the target generator; use rendered chunks as targets.
        #[arg(long)]
        renderer_only: bool,
    },
    /// Train the predictive model on a synthesized dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Target dataset file written by `synth`.
        #[arg(long)]
        dataset: PathBuf,
        /// Meta-prior W for a single run (default from config).
        #[arg(long)]
        w: Option<f64>,
        /// Train every W in the configured sweep list.
        #[arg(long)]
        sweep: bool,
    },
    /// Generate closed-loop trajectories from a checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Steps per run (default: the checkpoint's training length).
        #[arg(long)]
        steps: Option<usize>,
        /// Generate only from this stored initial latent state.
        #[arg(long)]
        sequence: Option<usize>,
        /// Add Gaussian noise of this sigma to every internal state.
        #[arg(long)]
        noise: Option<f64>,
        /// Also write full per-unit traces (mu, sigma, z, c).
        #[arg(long)]
        trace: bool,
    },
    /// Classify dataset sequences into prototype labels.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Divergence steps, Tri-gram KL, periodicity, and sigma reports.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Target dataset the checkpoints were trained on.
        #[arg(long)]
        targets: PathBuf,
        /// Trained checkpoints, one per meta-prior value.
        #[arg(long, num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        classifier: PathBuf,
        /// Target-generator checkpoint (reference stream source).
        #[arg(long)]
        targen: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        /// Optional directory for a CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            common,
            renderer_only,
        } => {
            let (cfg, seed) = common.resolve()?;
            commands::cmd_synth(&cfg, seed, &common.out, renderer_only)
        }
        Command::Train {
            common,
            dataset,
            w,
            sweep,
        } => {
            let (cfg, seed) = common.resolve()?;
            commands::cmd_train(
                &cfg,
                seed,
                &dataset,
                w,
                sweep,
                common.threads.max(1),
                &common.out,
            )
        }
        Command::Generate {
            common,
            checkpoint,
            steps,
            sequence,
            noise,
            trace,
        } => {
            let (cfg, seed) = common.resolve()?;
            commands::cmd_generate(
                &cfg, seed, &checkpoint, steps, sequence, noise, trace, &common.out,
            )
        }
        Command::Classify {
            common,
            classifier,
            dataset,
        } => {
            let (cfg, seed) = common.resolve()?;
            commands::cmd_classify(&cfg, seed, &classifier, &dataset, &common.out)
        }
        Command::Analyze {
            common,
            targets,
            checkpoints,
            classifier,
            targen,
        } => {
            let (cfg, seed) = common.resolve()?;
            commands::cmd_analyze(
                &cfg,
                seed,
                &targets,
                &checkpoints,
                &classifier,
                &targen,
                &common.out,
            )
        }
        Command::Gradcheck {
            seed,
            tolerance,
            out,
        } => commands::cmd_gradcheck(seed, tolerance, out.as_deref()),
    }
}
