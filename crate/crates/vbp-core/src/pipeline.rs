//! The experiment chain: probabilistic label grammars, prototype pattern
//! rendering, target synthesis, and label classification.
//!
//! A probabilistic finite state machine emits prototype labels (A/B/C), a
//! parametric renderer turns the labels into continuous 2-D patterns (three
//! visually distinct closed curves, jittered in amplitude and period per
//! emission), a target-generator network trained on the renderings
//! synthesizes long fluctuated target streams by closed-loop generation
//! with internal noise, and a classifier network segments patterns back
//! into label sequences for N-gram analysis.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::net::{forward_sequence, ForwardMode, NetworkSpec, Parameters};
use crate::rng::{Stream, ZeroNoise};
use crate::seqdata::{decode_frame, Dataset, DatasetMeta, EncodedSequence, GridCodec, Trajectory2D};
use crate::train::{train, train_pairs, EpochRecord, TrainHooks, TrainingConfig};
use crate::{domain_err, shape_err};

/// Prototype pattern label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    A,
    B,
    C,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::A, Label::B, Label::C];

    pub fn index(self) -> usize {
        match self {
            Label::A => 0,
            Label::B => 1,
            Label::C => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Label::A => 'A',
            Label::B => 'B',
            Label::C => 'C',
        }
    }

    pub fn from_char(c: char) -> Option<Label> {
        match c {
            'A' => Some(Label::A),
            'B' => Some(Label::B),
            'C' => Some(Label::C),
            _ => None,
        }
    }
}

/// One outgoing edge of a pFSM state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub label: Label,
    pub next: usize,
    pub probability: f64,
}

/// Probabilistic finite state machine emitting one label per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfsm {
    transitions: Vec<Vec<Transition>>,
    start: usize,
}

impl Pfsm {
    pub fn new(transitions: Vec<Vec<Transition>>, start: usize) -> Result<Self> {
        if transitions.is_empty() {
            return Err(domain_err!("pFSM needs at least one state"));
        }
        if start >= transitions.len() {
            return Err(domain_err!("start state {} out of range", start));
        }
        for (state, edges) in transitions.iter().enumerate() {
            if edges.is_empty() {
                return Err(domain_err!("state {} has no outgoing transitions", state));
            }
            let mut sum = 0.0;
            for edge in edges {
                if edge.next >= transitions.len() {
                    return Err(domain_err!(
                        "state {} transitions to unknown state {}",
                        state,
                        edge.next
                    ));
                }
                if !(edge.probability >= 0.0) {
                    return Err(domain_err!("state {} has a negative probability", state));
                }
                sum += edge.probability;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(domain_err!(
                    "state {} outgoing probabilities sum to {}",
                    state,
                    sum
                ));
            }
        }
        Ok(Pfsm { transitions, start })
    }

    pub fn states(&self) -> &[Vec<Transition>] {
        &self.transitions
    }

    pub fn start(&self) -> usize {
        self.start
    }
}

/// The triplet grammar: A, then B, then B with probability 0.3 or C with
/// probability 0.7, then back to the start.
pub fn default_pfsm() -> Pfsm {
    let t = |label, next, probability| Transition {
        label,
        next,
        probability,
    };
    Pfsm::new(
        vec![
            vec![t(Label::A, 1, 1.0)],
            vec![t(Label::B, 2, 1.0)],
            vec![t(Label::B, 3, 0.3), t(Label::C, 3, 0.7)],
            vec![t(Label::A, 1, 1.0)],
        ],
        0,
    )
    .expect("default pFSM is valid")
}

/// Markov walk over the pFSM, emitting `count` labels.
pub fn sample_labels(fsm: &Pfsm, count: usize, rng: &mut Stream) -> Result<Vec<Label>> {
    if count == 0 {
        return Err(domain_err!("label count must be >= 1"));
    }
    let mut out = Vec::with_capacity(count);
    let mut state = fsm.start();
    for _ in 0..count {
        let edges = &fsm.states()[state];
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut chosen = edges[edges.len() - 1];
        for edge in edges {
            acc += edge.probability;
            if u < acc {
                chosen = *edge;
                break;
            }
        }
        out.push(chosen.label);
        state = chosen.next;
    }
    Ok(out)
}

/// A closed periodic 2-D curve that starts and ends at its center point,
/// so consecutive emissions join continuously.
///
/// The curve family is
///
/// ```text
/// x(u) = cx + a * amp_x * sin(2 pi u)
/// y(u) = cy + a * (y_sin_amp * sin(2 pi y_sin_freq u) + y_cos_amp * (1 - cos(2 pi u)))
/// ```
///
/// with `u` in cycle units and `a` the per-emission amplitude multiplier.
/// Signed `y_cos_amp` places loops above or below the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrototypeShape {
    pub label: Label,
    pub center: [f64; 2],
    pub amp_x: f64,
    pub y_sin_amp: f64,
    pub y_sin_freq: f64,
    pub y_cos_amp: f64,
    /// Cycles per emission.
    pub cycles: usize,
    /// Relative amplitude jitter range; multiplier uniform in [1-j, 1+j].
    pub amplitude_jitter: f64,
    /// Relative period jitter range.
    pub period_jitter: f64,
    /// Standard deviation of per-step hand tremor added to each coordinate.
    pub tremor: f64,
}

impl PrototypeShape {
    fn point(&self, u: f64, amp: f64) -> [f64; 2] {
        let two_pi = core::f64::consts::TAU;
        let x = self.center[0] + amp * self.amp_x * libm::sin(two_pi * u);
        let y = self.center[1]
            + amp
                * (self.y_sin_amp * libm::sin(two_pi * self.y_sin_freq * u)
                    + self.y_cos_amp * (1.0 - libm::cos(two_pi * u)));
        [x, y]
    }

    /// Worst-case extent must stay inside the rendering margin.
    fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(domain_err!("shape {:?} needs at least one cycle", self.label));
        }
        for j in [self.amplitude_jitter, self.period_jitter] {
            if !(0.0..0.5).contains(&j) {
                return Err(domain_err!(
                    "jitter {} outside [0, 0.5) for shape {:?}",
                    j,
                    self.label
                ));
            }
        }
        if !(0.0..0.05).contains(&self.tremor) {
            return Err(domain_err!(
                "tremor {} outside [0, 0.05) for shape {:?}",
                self.tremor,
                self.label
            ));
        }
        let amp = 1.0 + self.amplitude_jitter;
        let x_lo = self.center[0] - amp * self.amp_x.abs();
        let x_hi = self.center[0] + amp * self.amp_x.abs();
        let y_up = self.y_sin_amp.abs() + 2.0 * self.y_cos_amp.max(0.0);
        let y_dn = self.y_sin_amp.abs() + 2.0 * (-self.y_cos_amp).max(0.0);
        let y_lo = self.center[1] - amp * y_dn;
        let y_hi = self.center[1] + amp * y_up;
        for v in [x_lo, x_hi, y_lo, y_hi] {
            if !(RENDER_MARGIN..=1.0 - RENDER_MARGIN).contains(&v) {
                return Err(domain_err!(
                    "shape {:?} extent [{}, {}] x [{}, {}] exceeds the workspace margin",
                    self.label,
                    x_lo,
                    x_hi,
                    y_lo,
                    y_hi
                ));
            }
        }
        Ok(())
    }
}

/// Rendered coordinates are kept inside this margin of the unit square.
pub const RENDER_MARGIN: f64 = 0.05;

/// One prototype shape per label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeTable {
    shapes: [PrototypeShape; 3],
}

impl ShapeTable {
    pub fn new(shapes: [PrototypeShape; 3]) -> Result<Self> {
        for (i, s) in shapes.iter().enumerate() {
            if s.label.index() != i {
                return Err(domain_err!("shape slot {} holds label {:?}", i, s.label));
            }
            s.validate()?;
        }
        Ok(ShapeTable { shapes })
    }

    pub fn get(&self, label: Label) -> &PrototypeShape {
        &self.shapes[label.index()]
    }

    pub fn shapes(&self) -> &[PrototypeShape; 3] {
        &self.shapes
    }
}

/// Three distinct curves: a circle looping above the center, a wide
/// horizontal figure-eight through it, and a taller ellipse looping below.
pub fn default_shapes(amplitude_jitter: f64, period_jitter: f64) -> Result<ShapeTable> {
    default_shapes_with_tremor(amplitude_jitter, period_jitter, 0.0)
}

/// [`default_shapes`] plus per-step hand tremor, the irregularity of a
/// pattern drawn by hand rather than computed.
pub fn default_shapes_with_tremor(
    amplitude_jitter: f64,
    period_jitter: f64,
    tremor: f64,
) -> Result<ShapeTable> {
    let base = |label| PrototypeShape {
        label,
        center: [0.5, 0.5],
        amp_x: 0.0,
        y_sin_amp: 0.0,
        y_sin_freq: 1.0,
        y_cos_amp: 0.0,
        cycles: 3,
        amplitude_jitter,
        period_jitter,
        tremor,
    };
    let circle = PrototypeShape {
        amp_x: 0.15,
        y_cos_amp: 0.15,
        ..base(Label::A)
    };
    let figure_eight = PrototypeShape {
        amp_x: 0.30,
        y_sin_amp: 0.12,
        y_sin_freq: 2.0,
        ..base(Label::B)
    };
    let ellipse = PrototypeShape {
        amp_x: 0.10,
        y_cos_amp: -0.16,
        ..base(Label::C)
    };
    ShapeTable::new([circle, figure_eight, ellipse])
}

/// Per-step labels plus the run-length-compressed prototype sequence (one
/// symbol per prototype emission).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSequence {
    per_step: Vec<Label>,
    compressed: Vec<Label>,
}

impl LabelSequence {
    pub fn new(per_step: Vec<Label>, compressed: Vec<Label>) -> Self {
        LabelSequence {
            per_step,
            compressed,
        }
    }

    pub fn per_step(&self) -> &[Label] {
        &self.per_step
    }

    pub fn compressed(&self) -> &[Label] {
        &self.compressed
    }

    pub fn compressed_string(&self) -> String {
        self.compressed.iter().map(|l| l.as_char()).collect()
    }
}

/// Render a label sequence into a continuous trajectory, drawing
/// per-emission amplitude and period multipliers from the shape jitter
/// ranges (amplitude first, then period).
///
/// Each emission renders `cycles` cycles of its curve; with period jitter
/// `j` the emission length is `round(cycles * steps_per_cycle * rho)` for
/// `rho` uniform in [1-j, 1+j]. Coordinates are clipped to the margin.
pub fn render_labels_detailed(
    labels: &[Label],
    shapes: &ShapeTable,
    steps_per_cycle: usize,
    rng: &mut Stream,
) -> Result<(Trajectory2D, LabelSequence)> {
    if labels.is_empty() {
        return Err(domain_err!("cannot render an empty label sequence"));
    }
    if steps_per_cycle < 2 {
        return Err(domain_err!("steps per cycle must be >= 2"));
    }
    let mut points = Vec::new();
    let mut per_step = Vec::new();
    for &label in labels {
        let shape = shapes.get(label);
        let amp = rng.next_range(1.0 - shape.amplitude_jitter, 1.0 + shape.amplitude_jitter);
        let rho = rng.next_range(1.0 - shape.period_jitter, 1.0 + shape.period_jitter);
        let nominal = (shape.cycles * steps_per_cycle) as f64;
        let steps = libm::round(nominal * rho).max(2.0) as usize;
        // sample u over (0, cycles]: each emission ends exactly at the
        // center point and the next one starts visibly moving, so every
        // frame's label is recognizable from the frame and its history
        for i in 0..steps {
            let u = (i + 1) as f64 * shape.cycles as f64 / steps as f64;
            let mut p = shape.point(u, amp);
            p[0] += shape.tremor * rng.standard_normal();
            p[1] += shape.tremor * rng.standard_normal();
            points.push([
                p[0].clamp(RENDER_MARGIN, 1.0 - RENDER_MARGIN),
                p[1].clamp(RENDER_MARGIN, 1.0 - RENDER_MARGIN),
            ]);
            per_step.push(label);
        }
    }
    let traj = Trajectory2D::new(points)?;
    Ok((traj, LabelSequence::new(per_step, labels.to_vec())))
}

/// [`render_labels_detailed`] returning only the trajectory.
pub fn render_labels(
    labels: &[Label],
    shapes: &ShapeTable,
    steps_per_cycle: usize,
    rng: &mut Stream,
) -> Result<Trajectory2D> {
    render_labels_detailed(labels, shapes, steps_per_cycle, rng).map(|(t, _)| t)
}

/// Train the target-generator network: the same stochastic core in its
/// deterministic limit (W = 0) fitted to the rendered patterns.
pub fn build_target_generator(
    dataset: &Dataset,
    spec: &NetworkSpec,
    config: &TrainingConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    let mut cfg = config.clone();
    cfg.meta_prior_w = 0.0;
    train(dataset, spec, &cfg, hooks)
}

/// Settings for target synthesis by noisy closed-loop generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGenOptions {
    pub total_steps: usize,
    /// Standard deviation of Gaussian noise added to every unit's internal
    /// state at every step.
    pub noise_sigma: f64,
    /// Steps discarded from the front of the run before slicing.
    pub sample_start: usize,
    pub slice_length: usize,
    pub slice_count: usize,
    /// Which stored initial latent state seeds the run.
    pub init_index: usize,
    pub seed: u64,
}

/// Run the target generator closed-loop with internal noise and slice the
/// tail of the run into a training dataset.
///
/// The generated frames are decoded to 2-D points; encoded frames are
/// recomputed from the codec when the dataset is built, matching the
/// on-disk representation.
pub fn generate_targets(
    params: &Parameters,
    spec: &NetworkSpec,
    codec: &GridCodec,
    opts: &TargetGenOptions,
) -> Result<Dataset> {
    if spec.input_dim() != codec.dim() || spec.output_dim() != codec.dim() {
        return Err(shape_err!(
            "codec dim {} does not match network IO dims {}/{}",
            codec.dim(),
            spec.input_dim(),
            spec.output_dim()
        ));
    }
    if opts.init_index >= params.init_latents.len() {
        return Err(domain_err!(
            "init latent index {} out of range ({} stored)",
            opts.init_index,
            params.init_latents.len()
        ));
    }
    if opts.slice_count == 0 || opts.slice_length < 2 {
        return Err(domain_err!("need at least one slice of length >= 2"));
    }
    let needed = opts.sample_start + opts.slice_count * opts.slice_length;
    if needed > opts.total_steps {
        return Err(domain_err!(
            "{} steps required (start {} + {} x {}) but the run has only {}",
            needed,
            opts.sample_start,
            opts.slice_count,
            opts.slice_length,
            opts.total_steps
        ));
    }
    let mut rng = Stream::derive(opts.seed, &[0x9e4]);
    let trace = forward_sequence(
        ForwardMode::ClosedLoop {
            steps: opts.total_steps,
        },
        &params.init_latents[opts.init_index],
        params,
        spec,
        &mut rng,
        Some(opts.noise_sigma),
    )?;
    let mut raw = Vec::with_capacity(opts.slice_count);
    for k in 0..opts.slice_count {
        let start = opts.sample_start + k * opts.slice_length;
        let points = trace.outputs[start..start + opts.slice_length]
            .iter()
            .map(|frame| decode_frame(frame, codec))
            .collect::<Result<Vec<_>>>()?;
        raw.push(Trajectory2D::new(points)?);
    }
    Dataset::from_trajectories(
        raw,
        *codec,
        DatasetMeta {
            seed: opts.seed,
            provenance: alloc::format!(
                "target-generator free-run: {} steps, noise sigma {}, sampled from step {}",
                opts.total_steps,
                opts.noise_sigma,
                opts.sample_start
            ),
        },
    )
}

/// Turn per-step labels into one-hot 3-way target frames, aligned so that
/// the output at step t is scored against the frame consumed at step t
/// (the input of step t is the frame at t-1). Step 1 consumes nothing and
/// keeps the first label as a prior guess.
pub fn label_targets(labels: &LabelSequence) -> Result<EncodedSequence> {
    let per_step = labels.per_step();
    let frames: Vec<Vec<f64>> = (0..per_step.len())
        .map(|t| {
            let label = per_step[t.saturating_sub(1)];
            let mut f = vec![0.0; 3];
            f[label.index()] = 1.0;
            f
        })
        .collect();
    EncodedSequence::new(frames)
}

/// Train the classifier: an input-driven network with a 3-way softmax head
/// fitted to per-step labels in the deterministic limit (W = 0).
pub fn build_classifier(
    inputs: &[EncodedSequence],
    labels: &[LabelSequence],
    spec: &NetworkSpec,
    config: &TrainingConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    if spec.output_dim() != 3 {
        return Err(shape_err!(
            "classifier output dim must be 3, got {}",
            spec.output_dim()
        ));
    }
    if inputs.len() != labels.len() {
        return Err(shape_err!(
            "{} input sequences but {} label sequences",
            inputs.len(),
            labels.len()
        ));
    }
    let targets = labels
        .iter()
        .map(label_targets)
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = config.clone();
    cfg.meta_prior_w = 0.0;
    train_pairs(inputs, &targets, spec, &cfg, hooks)
}

/// Post-processing for classifier outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    /// Runs shorter than this are dropped as spurious.
    pub min_run: usize,
    /// Nominal steps per prototype emission; merged runs are split into
    /// `max(1, round(len / nominal_run))` emissions.
    pub nominal_run: usize,
}

impl SegmentationConfig {
    /// Minimum-run threshold at 25% of the nominal prototype duration.
    pub fn for_nominal(nominal_run: usize) -> Self {
        SegmentationConfig {
            min_run: (nominal_run / 4).max(1),
            nominal_run,
        }
    }
}

/// Run-length compress per-step labels into a prototype sequence: drop
/// sub-threshold runs, merge adjacent equal runs, and split each merged run
/// into its rounded number of nominal-duration emissions.
pub fn compress_step_labels(per_step: &[Label], seg: &SegmentationConfig) -> Vec<Label> {
    assert!(seg.nominal_run >= 1, "nominal run must be >= 1");
    let mut runs: Vec<(Label, usize)> = Vec::new();
    for &l in per_step {
        match runs.last_mut() {
            Some((label, len)) if *label == l => *len += 1,
            _ => runs.push((l, 1)),
        }
    }
    runs.retain(|&(_, len)| len >= seg.min_run);
    let mut merged: Vec<(Label, usize)> = Vec::new();
    for (l, len) in runs {
        match merged.last_mut() {
            Some((label, total)) if *label == l => *total += len,
            _ => merged.push((l, len)),
        }
    }
    let mut out = Vec::new();
    for (l, len) in merged {
        let emissions = libm::round(len as f64 / seg.nominal_run as f64).max(1.0) as usize;
        out.extend(core::iter::repeat(l).take(emissions));
    }
    out
}

/// Classify a sequence into per-step labels by running the classifier
/// input-driven from the neutral initial state (z_1 = 0, no sampling
/// noise) and taking the per-step argmax; ties break toward the lowest
/// label index.
///
/// The network's output at step t labels the frame it consumed at step t
/// (the frame at t-1), so predictions are shifted back one step; the final
/// frame, which is never consumed, inherits the last prediction.
pub fn classify(
    params: &Parameters,
    spec: &NetworkSpec,
    seq: &EncodedSequence,
    seg: &SegmentationConfig,
) -> Result<LabelSequence> {
    if spec.output_dim() != 3 {
        return Err(shape_err!(
            "classifier output dim must be 3, got {}",
            spec.output_dim()
        ));
    }
    let zeros = vec![0.0; spec.total_units()];
    let trace = forward_sequence(
        ForwardMode::OpenLoop(seq),
        &zeros,
        params,
        spec,
        &mut ZeroNoise,
        None,
    )?;
    let argmax = |out: &[f64]| {
        let mut best = 0;
        for (i, &p) in out.iter().enumerate() {
            if p > out[best] {
                best = i;
            }
        }
        Label::from_index(best).expect("3-way output")
    };
    let steps = trace.outputs.len();
    let per_step: Vec<Label> = (0..steps)
        .map(|frame| argmax(&trace.outputs[(frame + 1).min(steps - 1)]))
        .collect();
    let compressed = compress_step_labels(&per_step, seg);
    Ok(LabelSequence::new(per_step, compressed))
}
