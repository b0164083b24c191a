//! Run configuration: a complete TOML document with two built-in presets.
//!
//! `paper` carries the full-scale defaults (seven layers, 11x11 grid,
//! 100,000 epochs, 100,000-step generations) and is documented as
//! long-running; `desk` shrinks sizes and schedules so the whole pipeline
//! finishes on a workstation. Every run writes its fully resolved
//! configuration next to its outputs, and that file alone reproduces the
//! run.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use vbp_core::net::NetworkSpec;
use vbp_core::seqdata::GridCodec;
use vbp_core::train::{AdamConfig, TrainingConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of the preset this configuration was derived from.
    pub preset: String,
    pub seed: u64,
    pub codec: CodecConfig,
    pub network: NetworkConfig,
    pub classifier: ClassifierConfig,
    pub training: TrainConfig,
    pub pipeline: PipelineConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub rows: usize,
    pub cols: usize,
    pub sharpness: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub time_constants: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub layer_sizes: Vec<usize>,
    pub time_constants: Vec<f64>,
    pub epochs: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub meta_prior_w: f64,
    /// W values visited by `train --sweep`.
    pub sweep_w: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub gradient_clip: Option<f64>,
    /// Write an intermediate checkpoint every N epochs (0 = only final).
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Prototype emissions in the rendered surrogate-human sequence.
    pub prototype_count: usize,
    pub steps_per_cycle: usize,
    pub amplitude_jitter: f64,
    pub period_jitter: f64,
    /// Per-step hand tremor in the rendered surrogate-human patterns.
    pub tremor: f64,
    /// Length of the sequences the target generator is trained on.
    pub targen_sequence_length: usize,
    pub targen_epochs: usize,
    pub targen_alpha: f64,
    /// Closed-loop free-run length for target synthesis.
    pub total_steps: usize,
    /// Gaussian noise added to every internal state during synthesis.
    pub noise_sigma: f64,
    pub slice_length: usize,
    pub slice_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub divergence_threshold: f64,
    pub ngram_n: usize,
    pub smoothing_epsilon: f64,
    /// Length of the closed-loop free-runs compared by N-gram KL.
    pub free_run_steps: usize,
}

impl RunConfig {
    /// Full-scale defaults.
    pub fn paper() -> Self {
        RunConfig {
            preset: "paper".into(),
            seed: 1,
            codec: CodecConfig {
                rows: 11,
                cols: 11,
                sharpness: 150.0,
            },
            network: NetworkConfig {
                layer_sizes: vec![121, 60, 30, 15, 10, 10, 10],
                time_constants: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
            },
            classifier: ClassifierConfig {
                layer_sizes: vec![60, 30, 15],
                time_constants: vec![2.0, 8.0, 32.0],
                epochs: 20_000,
                alpha: 1e-3,
            },
            training: TrainConfig {
                meta_prior_w: 0.0,
                sweep_w: vec![0.0, 0.01, 0.1, 0.2],
                epochs: 100_000,
                batch_size: 8,
                alpha: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                gradient_clip: None,
                checkpoint_every: 0,
            },
            pipeline: PipelineConfig {
                prototype_count: 30,
                steps_per_cycle: 25,
                amplitude_jitter: 0.1,
                period_jitter: 0.1,
                tremor: 0.008,
                targen_sequence_length: 375,
                targen_epochs: 100_000,
                targen_alpha: 1e-3,
                total_steps: 100_000,
                noise_sigma: 0.1,
                slice_length: 400,
                slice_count: 16,
            },
            analysis: AnalysisConfig {
                divergence_threshold: 0.025,
                ngram_n: 3,
                smoothing_epsilon: 1e-6,
                free_run_steps: 100_000,
            },
        }
    }

    /// Workstation-scale defaults: three layers, 9x9 grid, thousands of
    /// epochs, 2,000-step free-runs.
    pub fn desk() -> Self {
        let mut cfg = RunConfig::paper();
        cfg.preset = "desk".into();
        cfg.codec = CodecConfig {
            rows: 9,
            cols: 9,
            sharpness: 250.0,
        };
        cfg.network = NetworkConfig {
            layer_sizes: vec![30, 10, 5],
            time_constants: vec![2.0, 8.0, 32.0],
        };
        cfg.classifier = ClassifierConfig {
            layer_sizes: vec![20, 10],
            time_constants: vec![2.0, 8.0],
            epochs: 4_000,
            alpha: 0.005,
        };
        cfg.training.epochs = 5_000;
        cfg.training.alpha = 0.01;
        cfg.training.gradient_clip = Some(5.0);
        cfg.pipeline.steps_per_cycle = 20;
        cfg.pipeline.targen_sequence_length = 300;
        cfg.pipeline.targen_epochs = 4_000;
        cfg.pipeline.targen_alpha = 0.01;
        cfg.pipeline.total_steps = 8_000;
        cfg.pipeline.slice_count = 8;
        cfg.analysis.free_run_steps = 2_000;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(RunConfig::paper()),
            "desk" => Ok(RunConfig::desk()),
            other => bail!("unknown preset `{}` (expected `paper` or `desk`)", other),
        }
    }

    /// Parse a complete configuration file; unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_codec()?;
        self.network_spec()?;
        self.classifier_spec()?;
        if !(0.0..=1.0).contains(&self.training.meta_prior_w) {
            bail!("training.meta_prior_w must lie in [0,1]");
        }
        for &w in &self.training.sweep_w {
            if !(0.0..=1.0).contains(&w) {
                bail!("training.sweep_w entries must lie in [0,1]");
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing config")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn grid_codec(&self) -> Result<GridCodec> {
        GridCodec::new(self.codec.rows, self.codec.cols, self.codec.sharpness)
            .map_err(|e| anyhow::anyhow!("codec config: {}", e))
    }

    /// Network spec for the predictive model and the target generator.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        let m = self.codec.rows * self.codec.cols;
        NetworkSpec::new(
            self.network.layer_sizes.clone(),
            self.network.time_constants.clone(),
            m,
            m,
        )
        .map_err(|e| anyhow::anyhow!("network config: {}", e))
    }

    /// Network spec for the 3-way label classifier.
    pub fn classifier_spec(&self) -> Result<NetworkSpec> {
        let m = self.codec.rows * self.codec.cols;
        NetworkSpec::new(
            self.classifier.layer_sizes.clone(),
            self.classifier.time_constants.clone(),
            m,
            3,
        )
        .map_err(|e| anyhow::anyhow!("classifier config: {}", e))
    }

    pub fn training_config(&self, meta_prior_w: f64, seed: u64) -> TrainingConfig {
        TrainingConfig {
            meta_prior_w,
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            adam: AdamConfig {
                alpha: self.training.alpha,
                beta1: self.training.beta1,
                beta2: self.training.beta2,
                epsilon: self.training.epsilon,
            },
            seed,
            gradient_clip: self.training.gradient_clip,
        }
    }

    pub fn targen_config(&self, seed: u64) -> TrainingConfig {
        let mut cfg = self.training_config(0.0, seed);
        cfg.epochs = self.pipeline.targen_epochs;
        cfg.adam.alpha = self.pipeline.targen_alpha;
        cfg
    }

    pub fn classifier_config(&self, seed: u64) -> TrainingConfig {
        let mut cfg = self.training_config(0.0, seed);
        cfg.epochs = self.classifier.epochs;
        cfg.adam.alpha = self.classifier.alpha;
        cfg
    }

    /// Nominal steps per prototype emission (cycles x steps per cycle).
    pub fn nominal_emission_steps(&self) -> usize {
        3 * self.pipeline.steps_per_cycle
    }
}
