//! High-level experiment steps shared by the CLI commands and the
//! acceptance suite: surrogate-data rendering, target-generator and
//! classifier training, target synthesis, closed-loop regeneration, and
//! free-run N-gram evaluation.

use anyhow::{anyhow, Result};

use vbp_core::analysis::{
    average_divergence_step, ngram_distribution, ngram_kl, DivergenceReport, NGramDistribution,
};
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec, Parameters};
use vbp_core::pipeline::{
    build_classifier, build_target_generator, classify, default_pfsm, default_shapes_with_tremor,
    generate_targets, render_labels_detailed, sample_labels, Label, LabelSequence, Pfsm,
    SegmentationConfig, TargetGenOptions,
};
use vbp_core::rng::Stream;
use vbp_core::seqdata::{decode_frame, Dataset, DatasetMeta, EncodedSequence, GridCodec, Trajectory2D};
use vbp_core::train::{EpochRecord, NoHooks, TrainHooks};

use crate::config::RunConfig;

/// Seed-stream tags, one per pipeline stage, so stages stay independent.
mod tags {
    pub const LABELS: u64 = 1;
    pub const RENDER: u64 = 2;
    pub const TARGEN_TRAIN: u64 = 3;
    pub const GENERATE: u64 = 4;
    pub const CLASSIFIER_TRAIN: u64 = 5;
    pub const REGEN: u64 = 6;
    pub const FREE_RUN: u64 = 7;
    pub const TARGET_STREAM: u64 = 8;
    pub const VBP_TRAIN: u64 = 9;
}

fn tag_seed(seed: u64, tag: u64) -> u64 {
    let mut s = Stream::derive(seed, &[tag]);
    s.next_u64()
}

/// Rendered surrogate-human data: the full trajectory, its per-step and
/// compressed labels, and the chunked training views.
pub struct Rendering {
    pub trajectory: Trajectory2D,
    pub labels: LabelSequence,
    /// Chunked into training sequences of the configured length.
    pub dataset: Dataset,
    /// Per-chunk step labels aligned with `dataset`.
    pub chunk_labels: Vec<LabelSequence>,
    pub fsm: Pfsm,
}

/// Sample prototype labels from the pFSM and render them to a trajectory,
/// then split into fixed-length training chunks.
pub fn render_surrogate(cfg: &RunConfig, seed: u64) -> Result<Rendering> {
    let codec = cfg.grid_codec()?;
    let fsm = default_pfsm();
    let mut label_rng = Stream::new(tag_seed(seed, tags::LABELS));
    let labels = sample_labels(&fsm, cfg.pipeline.prototype_count, &mut label_rng)
        .map_err(|e| anyhow!("sampling labels: {}", e))?;
    let shapes = default_shapes_with_tremor(
        cfg.pipeline.amplitude_jitter,
        cfg.pipeline.period_jitter,
        cfg.pipeline.tremor,
    )
    .map_err(|e| anyhow!("shapes: {}", e))?;
    let mut render_rng = Stream::new(tag_seed(seed, tags::RENDER));
    let (trajectory, step_labels) = render_labels_detailed(
        &labels,
        &shapes,
        cfg.pipeline.steps_per_cycle,
        &mut render_rng,
    )
    .map_err(|e| anyhow!("rendering: {}", e))?;

    let chunk = cfg.pipeline.targen_sequence_length;
    let points = trajectory.points();
    let per_step = step_labels.per_step();
    let mut raw = Vec::new();
    let mut chunk_labels = Vec::new();
    let seg = SegmentationConfig::for_nominal(cfg.nominal_emission_steps());
    let mut start = 0;
    while start + chunk <= points.len() {
        raw.push(
            Trajectory2D::new(points[start..start + chunk].to_vec())
                .map_err(|e| anyhow!("chunking rendering: {}", e))?,
        );
        let slice = per_step[start..start + chunk].to_vec();
        let compressed = vbp_core::pipeline::compress_step_labels(&slice, &seg);
        chunk_labels.push(LabelSequence::new(slice, compressed));
        start += chunk;
    }
    if raw.is_empty() {
        anyhow::bail!(
            "rendering of {} steps is shorter than one training chunk ({})",
            points.len(),
            chunk
        );
    }
    let dataset = Dataset::from_trajectories(
        raw,
        codec,
        DatasetMeta {
            seed,
            provenance: format!(
                "pFSM labels rendered with jitter {}/{} tremor {}",
                cfg.pipeline.amplitude_jitter, cfg.pipeline.period_jitter, cfg.pipeline.tremor
            ),
        },
    )
    .map_err(|e| anyhow!("building rendered dataset: {}", e))?;
    Ok(Rendering {
        trajectory,
        labels: step_labels,
        dataset,
        chunk_labels,
        fsm,
    })
}

/// Train the target generator on the rendered chunks.
pub fn train_target_generator(
    cfg: &RunConfig,
    rendering: &Rendering,
    seed: u64,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    let spec = cfg.network_spec()?;
    let mut tc = cfg.targen_config(tag_seed(seed, tags::TARGEN_TRAIN));
    tc.batch_size = tc.batch_size.min(rendering.dataset.len());
    build_target_generator(&rendering.dataset, &spec, &tc, hooks)
        .map_err(|e| anyhow!("target-generator training: {}", e))
}

/// Synthesize the fluctuated training targets from a trained generator.
pub fn synthesize_targets(
    cfg: &RunConfig,
    targen: &Parameters,
    seed: u64,
) -> Result<Dataset> {
    let spec = cfg.network_spec()?;
    let codec = cfg.grid_codec()?;
    let opts = TargetGenOptions {
        total_steps: cfg.pipeline.total_steps,
        noise_sigma: cfg.pipeline.noise_sigma,
        sample_start: cfg.pipeline.total_steps / 2,
        slice_length: cfg.pipeline.slice_length,
        slice_count: cfg.pipeline.slice_count,
        init_index: 0,
        seed: tag_seed(seed, tags::GENERATE),
    };
    generate_targets(targen, &spec, &codec, &opts).map_err(|e| anyhow!("target synthesis: {}", e))
}

/// Train the 3-way label classifier on the rendered chunks plus one clean
/// (zero-jitter) rendering of a fresh label draw, which anchors the exact
/// prototype timing.
pub fn train_classifier(
    cfg: &RunConfig,
    rendering: &Rendering,
    seed: u64,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    let spec = cfg.classifier_spec()?;
    let codec = cfg.grid_codec()?;
    let mut inputs: Vec<EncodedSequence> = rendering.dataset.sequences().to_vec();
    let mut labels = rendering.chunk_labels.clone();

    let clean_seed = tag_seed(seed, tags::CLASSIFIER_TRAIN) ^ 0xc1ea;
    let mut label_rng = Stream::new(clean_seed);
    let clean_count = (cfg.pipeline.prototype_count / 2).max(6);
    let clean_labels = sample_labels(&rendering.fsm, clean_count, &mut label_rng)
        .map_err(|e| anyhow!("clean labels: {}", e))?;
    let clean_shapes = default_shapes_with_tremor(0.0, 0.0, 0.0).map_err(|e| anyhow!("{}", e))?;
    let mut render_rng = Stream::new(clean_seed ^ 0x11);
    let (clean_traj, clean_steps) = render_labels_detailed(
        &clean_labels,
        &clean_shapes,
        cfg.pipeline.steps_per_cycle,
        &mut render_rng,
    )
    .map_err(|e| anyhow!("clean rendering: {}", e))?;
    let chunk = cfg.pipeline.targen_sequence_length;
    let seg = SegmentationConfig::for_nominal(cfg.nominal_emission_steps());
    let points = clean_traj.points();
    let per_step = clean_steps.per_step();
    let mut start = 0;
    while start + chunk <= points.len() {
        let t = Trajectory2D::new(points[start..start + chunk].to_vec())
            .map_err(|e| anyhow!("clean chunk: {}", e))?;
        inputs.push(
            vbp_core::seqdata::encode_trajectory(&t, &codec).map_err(|e| anyhow!("{}", e))?,
        );
        let slice = per_step[start..start + chunk].to_vec();
        let compressed = vbp_core::pipeline::compress_step_labels(&slice, &seg);
        labels.push(LabelSequence::new(slice, compressed));
        start += chunk;
    }

    let mut tc = cfg.classifier_config(tag_seed(seed, tags::CLASSIFIER_TRAIN));
    tc.batch_size = tc.batch_size.min(inputs.len());
    build_classifier(&inputs, &labels, &spec, &tc, hooks)
        .map_err(|e| anyhow!("classifier training: {}", e))
}

/// Train the predictive model on the target dataset at a given meta-prior.
pub fn train_vbp(
    cfg: &RunConfig,
    targets: &Dataset,
    meta_prior_w: f64,
    seed: u64,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    let spec = cfg.network_spec()?;
    let mut tc = cfg.training_config(meta_prior_w, tag_seed(seed, tags::VBP_TRAIN));
    tc.batch_size = tc.batch_size.min(targets.len());
    vbp_core::train::train(targets, &spec, &tc, hooks).map_err(|e| anyhow!("training: {}", e))
}

/// Closed-loop regeneration from one stored initial latent state, decoded
/// to 2-D.
pub fn regenerate(
    params: &Parameters,
    spec: &NetworkSpec,
    codec: &GridCodec,
    seq_index: usize,
    steps: usize,
    seed: u64,
) -> Result<Trajectory2D> {
    let mut rng = Stream::derive(tag_seed(seed, tags::REGEN), &[seq_index as u64]);
    let trace = forward_sequence(
        ForwardMode::ClosedLoop { steps },
        params
            .init_latents
            .get(seq_index)
            .ok_or_else(|| anyhow!("no initial latent state {}", seq_index))?,
        params,
        spec,
        &mut rng,
        None,
    )
    .map_err(|e| anyhow!("closed-loop generation: {}", e))?;
    decode_outputs(&trace.outputs, codec)
}

pub fn decode_outputs(outputs: &[Vec<f64>], codec: &GridCodec) -> Result<Trajectory2D> {
    let points = outputs
        .iter()
        .map(|f| decode_frame(f, codec).map_err(|e| anyhow!("decoding output: {}", e)))
        .collect::<Result<Vec<_>>>()?;
    Trajectory2D::new(points).map_err(|e| anyhow!("decoded trajectory: {}", e))
}

/// Divergence report of per-sequence closed-loop regenerations against the
/// training sequences.
pub fn regeneration_divergence(
    cfg: &RunConfig,
    params: &Parameters,
    targets: &Dataset,
    seed: u64,
) -> Result<(DivergenceReport, Vec<Trajectory2D>)> {
    let spec = cfg.network_spec()?;
    let codec = cfg.grid_codec()?;
    let mut regens = Vec::with_capacity(targets.len());
    for idx in 0..targets.len() {
        let steps = targets.raw()[idx].step_count();
        regens.push(regenerate(params, &spec, &codec, idx, steps, seed)?);
    }
    let pairs: Vec<(&Trajectory2D, &Trajectory2D)> =
        targets.raw().iter().zip(regens.iter()).collect();
    let report = average_divergence_step(&pairs, cfg.analysis.divergence_threshold)
        .map_err(|e| anyhow!("divergence: {}", e))?;
    Ok((report, regens))
}

/// A long stochastic run of the target generator, classified into labels:
/// the reference stream for N-gram comparison.
pub fn target_stream_labels(
    cfg: &RunConfig,
    targen: &Parameters,
    classifier: &Parameters,
    seed: u64,
) -> Result<LabelSequence> {
    let spec = cfg.network_spec()?;
    let mut rng = Stream::new(tag_seed(seed, tags::TARGET_STREAM));
    let trace = forward_sequence(
        ForwardMode::ClosedLoop {
            steps: cfg.analysis.free_run_steps,
        },
        &targen.init_latents[0],
        targen,
        &spec,
        &mut rng,
        Some(cfg.pipeline.noise_sigma),
    )
    .map_err(|e| anyhow!("target stream: {}", e))?;
    classify_frames(cfg, classifier, &trace.outputs)
}

/// A free-run of a trained model (its own sampling noise only), classified
/// into labels.
pub fn free_run_labels(
    cfg: &RunConfig,
    params: &Parameters,
    classifier: &Parameters,
    seed: u64,
) -> Result<(LabelSequence, Trajectory2D)> {
    let spec = cfg.network_spec()?;
    let codec = cfg.grid_codec()?;
    let mut rng = Stream::new(tag_seed(seed, tags::FREE_RUN));
    let trace = forward_sequence(
        ForwardMode::ClosedLoop {
            steps: cfg.analysis.free_run_steps,
        },
        &params.init_latents[0],
        params,
        &spec,
        &mut rng,
        None,
    )
    .map_err(|e| anyhow!("free run: {}", e))?;
    let labels = classify_frames(cfg, classifier, &trace.outputs)?;
    let traj = decode_outputs(&trace.outputs, &codec)?;
    Ok((labels, traj))
}

/// Run the classifier over raw output frames.
pub fn classify_frames(
    cfg: &RunConfig,
    classifier: &Parameters,
    frames: &[Vec<f64>],
) -> Result<LabelSequence> {
    let spec = cfg.classifier_spec()?;
    let seq = EncodedSequence::new(frames.to_vec()).map_err(|e| anyhow!("frames: {}", e))?;
    let seg = SegmentationConfig::for_nominal(cfg.nominal_emission_steps());
    classify(classifier, &spec, &seq, &seg).map_err(|e| anyhow!("classification: {}", e))
}

/// Classify an encoded sequence directly.
pub fn classify_sequence(
    cfg: &RunConfig,
    classifier: &Parameters,
    seq: &EncodedSequence,
) -> Result<LabelSequence> {
    let spec = cfg.classifier_spec()?;
    let seg = SegmentationConfig::for_nominal(cfg.nominal_emission_steps());
    classify(classifier, &spec, seq, &seg).map_err(|e| anyhow!("classification: {}", e))
}

/// Smoothed N-gram distribution over a compressed label stream.
pub fn label_trigram(cfg: &RunConfig, labels: &LabelSequence) -> Result<NGramDistribution> {
    ngram_distribution(
        labels.compressed(),
        cfg.analysis.ngram_n,
        cfg.analysis.smoothing_epsilon,
    )
    .map_err(|e| anyhow!("n-gram distribution: {}", e))
}

/// Evaluation of one trained model against the reference stream.
pub struct WRunEvaluation {
    pub meta_prior_w: f64,
    pub final_sigma: f64,
    pub divergence: DivergenceReport,
    /// KL(target stream n-grams || model free-run n-grams).
    pub trigram_kl: f64,
    /// The reverse direction, reported alongside.
    pub trigram_kl_reverse: f64,
    pub free_run_labels: LabelSequence,
    pub free_run_trajectory: Trajectory2D,
}

/// Train and evaluate one meta-prior setting end to end.
pub fn evaluate_w(
    cfg: &RunConfig,
    targets: &Dataset,
    target_trigram: &NGramDistribution,
    classifier: &Parameters,
    meta_prior_w: f64,
    seed: u64,
) -> Result<WRunEvaluation> {
    let (params, log) = train_vbp(cfg, targets, meta_prior_w, seed, &mut NoHooks)?;
    evaluate_trained(cfg, targets, target_trigram, classifier, &params, &log, meta_prior_w, seed)
}

/// Evaluate an already-trained model.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_trained(
    cfg: &RunConfig,
    targets: &Dataset,
    target_trigram: &NGramDistribution,
    classifier: &Parameters,
    params: &Parameters,
    log: &[EpochRecord],
    meta_prior_w: f64,
    seed: u64,
) -> Result<WRunEvaluation> {
    let (divergence, _) = regeneration_divergence(cfg, params, targets, seed)?;
    let (labels, traj) = free_run_labels(cfg, params, classifier, seed)?;
    let (kl, kl_rev) = match label_trigram(cfg, &labels) {
        Ok(model_trigram) => (
            ngram_kl(target_trigram, &model_trigram)
                .map_err(|e| anyhow!("trigram KL: {}", e))?,
            ngram_kl(&model_trigram, target_trigram)
                .map_err(|e| anyhow!("trigram KL: {}", e))?,
        ),
        // a degenerate free-run can yield fewer compressed labels than N;
        // score it as maximally mismatched rather than failing the report
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    Ok(WRunEvaluation {
        meta_prior_w,
        final_sigma: log.last().map(|r| r.mean_sigma).unwrap_or(f64::NAN),
        divergence,
        trigram_kl: kl,
        trigram_kl_reverse: kl_rev,
        free_run_labels: labels,
        free_run_trajectory: traj,
    })
}

/// Convenience: everything `synth` produces in memory.
pub struct SynthProducts {
    pub rendering: Rendering,
    pub targen: Parameters,
    pub targen_log: Vec<EpochRecord>,
    pub targets: Dataset,
    pub classifier: Parameters,
    pub classifier_log: Vec<EpochRecord>,
}

/// Run the full synthesis chain: render, train generator, synthesize
/// targets, train classifier.
pub fn synthesize_all(cfg: &RunConfig, seed: u64) -> Result<SynthProducts> {
    let rendering = render_surrogate(cfg, seed)?;
    let (targen, targen_log) = train_target_generator(cfg, &rendering, seed, &mut NoHooks)?;
    let targets = synthesize_targets(cfg, &targen, seed)?;
    let (classifier, classifier_log) = train_classifier(cfg, &rendering, seed, &mut NoHooks)?;
    Ok(SynthProducts {
        rendering,
        targen,
        targen_log,
        targets,
        classifier,
        classifier_log,
    })
}

/// Frequency of the C-branch among completed grammar triplets in a
/// compressed stream, scanning for A-B-? windows.
pub fn branch_frequency(labels: &[Label]) -> Option<f64> {
    let mut abb = 0usize;
    let mut abc = 0usize;
    for w in labels.windows(3) {
        if w[0] == Label::A && w[1] == Label::B {
            match w[2] {
                Label::B => abb += 1,
                Label::C => abc += 1,
                Label::A => {}
            }
        }
    }
    if abb + abc == 0 {
        None
    } else {
        Some(abc as f64 / (abb + abc) as f64)
    }
}

/// Median of a small list.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

pub fn context_err<T>(r: vbp_core::Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| anyhow!("{}: {}", what, e))
}

