//! Maximizing the weighted lower bound by backpropagation through time.
//!
//! Gradients are exact within the reparameterization: the recorded noise
//! values are treated as constants, so the loss is a deterministic,
//! differentiable function of the weights and of each sequence's initial
//! latent state. The optimizer ascends the lower bound with Adam; initial
//! latent states receive the same treatment as every weight block.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::net::{
    forward_sequence, lower_bound, ForwardMode, LatentTrace, LossBreakdown, NetworkSpec,
    Parameters,
};
use crate::rng::{ReplayNoise, Stream};
use crate::seqdata::{softmax, Dataset, EncodedSequence};
use crate::{domain_err, shape_err};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Training-run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Meta-prior W weighting the regularization term against the
    /// reconstruction term.
    pub meta_prior_w: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Optional global gradient-norm ceiling (off by default).
    pub gradient_clip: Option<f64>,
}

impl TrainingConfig {
    pub fn new(meta_prior_w: f64, epochs: usize, seed: u64) -> Self {
        TrainingConfig {
            meta_prior_w,
            epochs,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed,
            gradient_clip: None,
        }
    }

    fn validate(&self, num_sequences: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.meta_prior_w) {
            return Err(domain_err!(
                "meta-prior W must lie in [0,1], got {}",
                self.meta_prior_w
            ));
        }
        if self.epochs == 0 {
            return Err(domain_err!("epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > num_sequences {
            return Err(domain_err!(
                "batch size {} must lie in 1..={}",
                self.batch_size,
                num_sequences
            ));
        }
        if let Some(clip) = self.gradient_clip {
            if !(clip > 0.0) {
                return Err(domain_err!("gradient clip must be positive, got {}", clip));
            }
        }
        Ok(())
    }
}

/// One gradient block per parameter block, same shapes as [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub w_mu_c: Mat,
    pub w_mu_x: Mat,
    pub w_sigma_c: Mat,
    pub w_x_c: Mat,
    pub b_mu: Vec<f64>,
    pub b_sigma: Vec<f64>,
    pub b_x: Vec<f64>,
    pub init_latents: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &Parameters) -> Self {
        GradientSet {
            w_mu_c: Mat::zeros(params.w_mu_c.rows(), params.w_mu_c.cols()),
            w_mu_x: Mat::zeros(params.w_mu_x.rows(), params.w_mu_x.cols()),
            w_sigma_c: Mat::zeros(params.w_sigma_c.rows(), params.w_sigma_c.cols()),
            w_x_c: Mat::zeros(params.w_x_c.rows(), params.w_x_c.cols()),
            b_mu: vec![0.0; params.b_mu.len()],
            b_sigma: vec![0.0; params.b_sigma.len()],
            b_x: vec![0.0; params.b_x.len()],
            init_latents: params.init_latents.iter().map(|z| vec![0.0; z.len()]).collect(),
        }
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("w_mu_c", self.w_mu_c.as_slice()),
            ("w_mu_x", self.w_mu_x.as_slice()),
            ("w_sigma_c", self.w_sigma_c.as_slice()),
            ("w_x_c", self.w_x_c.as_slice()),
            ("b_mu", &self.b_mu),
            ("b_sigma", &self.b_sigma),
            ("b_x", &self.b_x),
        ];
        for z in &self.init_latents {
            out.push(("init_latents", z));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![
            ("w_mu_c", self.w_mu_c.as_mut_slice()),
            ("w_mu_x", self.w_mu_x.as_mut_slice()),
            ("w_sigma_c", self.w_sigma_c.as_mut_slice()),
            ("w_x_c", self.w_x_c.as_mut_slice()),
            ("b_mu", &mut self.b_mu),
            ("b_sigma", &mut self.b_sigma),
            ("b_x", &mut self.b_x),
        ];
        for z in &mut self.init_latents {
            out.push(("init_latents", z));
        }
        out
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for ((_, a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            debug_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, block) in self.blocks_mut() {
            for v in block {
                *v *= factor;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        for (_, block) in self.blocks() {
            for v in block {
                sum += v * v;
            }
        }
        libm::sqrt(sum)
    }

    pub fn first_non_finite_block(&self) -> Option<&'static str> {
        for (name, block) in self.blocks() {
            if block.iter().any(|v| !v.is_finite()) {
                return Some(name);
            }
        }
        None
    }
}

impl Parameters {
    pub(crate) fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.w_mu_c.as_mut_slice(),
            self.w_mu_x.as_mut_slice(),
            self.w_sigma_c.as_mut_slice(),
            self.w_x_c.as_mut_slice(),
            &mut self.b_mu,
            &mut self.b_sigma,
            &mut self.b_x,
        ];
        for z in &mut self.init_latents {
            out.push(z);
        }
        out
    }
}

/// First and second moment accumulators mirroring the parameter blocks.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
            step: 0,
        }
    }
}

/// One Adam update in the ascent direction of the lower bound.
pub fn adam_step(
    params: &mut Parameters,
    grads: &GradientSet,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if let Some(block) = grads.first_non_finite_block() {
        return Err(CoreError::NonFinite(block));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(config.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(config.beta2, t as f64);

    let mut p_blocks = params.param_blocks_mut();
    let g_blocks = grads.blocks();
    let mut m_blocks = state.m.blocks_mut();
    let mut v_blocks = state.v.blocks_mut();
    if p_blocks.len() != g_blocks.len() {
        return Err(shape_err!(
            "gradient set has {} blocks, parameters have {}",
            g_blocks.len(),
            p_blocks.len()
        ));
    }
    for idx in 0..p_blocks.len() {
        let p = &mut p_blocks[idx];
        let (gname, g) = &g_blocks[idx];
        let (_, m) = &mut m_blocks[idx];
        let (_, v) = &mut v_blocks[idx];
        if p.len() != g.len() {
            return Err(shape_err!("block {} length mismatch", gname));
        }
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] += config.alpha * m_hat / (libm::sqrt(v_hat) + config.epsilon);
        }
    }
    Ok(())
}

/// Exact ascent gradients of the weighted lower bound for one sequence,
/// with separate input (teacher-forced frames) and target streams.
///
/// `seq_index` selects which entry of the init-latent block receives the
/// z_1 gradient; all other entries stay zero.
pub fn backward_pairs(
    trace: &LatentTrace,
    input: &EncodedSequence,
    target: &EncodedSequence,
    params: &Parameters,
    spec: &NetworkSpec,
    meta_prior_w: f64,
    seq_index: usize,
) -> Result<(GradientSet, LossBreakdown)> {
    let steps = trace.step_count();
    if input.step_count() != steps || target.step_count() != steps {
        return Err(shape_err!(
            "trace has {} steps, input {}, target {}",
            steps,
            input.step_count(),
            target.step_count()
        ));
    }
    if seq_index >= params.init_latents.len() {
        return Err(domain_err!(
            "sequence index {} out of range ({} init latents)",
            seq_index,
            params.init_latents.len()
        ));
    }
    let loss = lower_bound(trace, target, meta_prior_w)?;

    let c_total = spec.total_units();
    let n0 = spec.lowest_size();
    let taus = spec.unit_time_constants();
    let w = meta_prior_w;
    let recon_w = 1.0 - w;
    let inv_2c = 1.0 / (2.0 * c_total as f64);

    let mut grads = GradientSet::zeros_like(params);

    // carried one step backward: gradients of the step t+1 preactivations
    // and mean, which reach step t through c_t and the leak on z_t
    let mut g_premu_next = vec![0.0; c_total];
    let mut g_presig_next = vec![0.0; c_total];
    let mut g_mu_next = vec![0.0; c_total];
    let mut have_next = false;

    let mut g_c = vec![0.0; c_total];
    for s in (0..steps).rev() {
        // output path: d L_x / d logit = target - output (softmax identity)
        let out = &trace.outputs[s];
        let tgt = target.frame(s);
        let mut g_logit = vec![0.0; out.len()];
        for m in 0..out.len() {
            g_logit[m] = recon_w * (tgt[m] - out[m]);
        }
        let c_low = &trace.c[s][..n0];
        grads.w_x_c.rank_one_add(&g_logit, c_low, 1.0);
        for (gb, gl) in grads.b_x.iter_mut().zip(g_logit.iter()) {
            *gb += gl;
        }

        for v in g_c.iter_mut() {
            *v = 0.0;
        }
        params.w_x_c.matvec_t_add(&g_logit, &mut g_c[..n0]);
        if have_next {
            params.w_mu_c.matvec_t_add(&g_premu_next, &mut g_c);
            params.w_sigma_c.matvec_t_add(&g_presig_next, &mut g_c);
        }

        // dz: through c = tanh(z) and the next step's leak term
        let mut g_z = vec![0.0; c_total];
        for i in 0..c_total {
            let dtanh = 1.0 - trace.c[s][i] * trace.c[s][i];
            g_z[i] = g_c[i] * dtanh;
            if have_next {
                g_z[i] += g_mu_next[i] * (1.0 - 1.0 / taus[i]);
            }
        }

        if s == 0 {
            // z_1 is a free parameter
            grads.init_latents[seq_index].copy_from_slice(&g_z);
            break;
        }

        // recognition model at step s+1 (1-based): mu and sigma paths
        let mut g_premu = vec![0.0; c_total];
        let mut g_presig = vec![0.0; c_total];
        let mut g_mu = vec![0.0; c_total];
        for i in 0..c_total {
            let mu = trace.mu[s][i];
            let sigma = trace.sigma[s][i];
            let eps = trace.eps[s][i];
            // KL contributions: d L_z / d mu = -mu / C,
            // d L_z / d presig = (1 - sigma^2) / (2C)
            g_mu[i] = g_z[i] + w * (-mu / c_total as f64);
            g_premu[i] = g_mu[i] / taus[i];
            g_presig[i] = g_z[i] * eps * 0.5 * sigma + w * (1.0 - sigma * sigma) * inv_2c;
        }

        let prev_c = &trace.c[s - 1];
        let prev_x = input.frame(s - 1);
        grads.w_mu_c.rank_one_add(&g_premu, prev_c, 1.0);
        grads.w_sigma_c.rank_one_add(&g_presig, prev_c, 1.0);
        grads.w_mu_x.rank_one_add(&g_premu[..n0], prev_x, 1.0);
        for i in 0..c_total {
            grads.b_mu[i] += g_premu[i];
            grads.b_sigma[i] += g_presig[i];
        }

        g_premu_next = g_premu;
        g_presig_next = g_presig;
        g_mu_next = g_mu;
        have_next = true;
    }

    // recurrent weights exist only between adjacent layers
    let mask = spec.recurrent_mask();
    for i in 0..c_total {
        for j in 0..c_total {
            if !mask[i * c_total + j] {
                grads.w_mu_c.set(i, j, 0.0);
                grads.w_sigma_c.set(i, j, 0.0);
            }
        }
    }

    if let Some(block) = grads.first_non_finite_block() {
        return Err(CoreError::NonFinite(block));
    }
    Ok((grads, loss))
}

/// [`backward_pairs`] for the self-prediction case, where the target
/// sequence also supplies the teacher-forced inputs.
pub fn backward_sequence(
    trace: &LatentTrace,
    target: &EncodedSequence,
    params: &Parameters,
    spec: &NetworkSpec,
    meta_prior_w: f64,
    seq_index: usize,
) -> Result<(GradientSet, LossBreakdown)> {
    backward_pairs(trace, target, target, params, spec, meta_prior_w, seq_index)
}

/// Per-epoch summary appended to the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean weighted lower bound over the epoch's sequences.
    pub total: f64,
    pub l_z: f64,
    pub l_x: f64,
    /// Mean sigma over sequences, steps >= 2, and units.
    pub mean_sigma: f64,
    pub clamp_warnings: u64,
    /// Mini-batches whose gradient was rescaled by the norm ceiling.
    pub clipped_batches: u32,
}

/// Observer invoked once per epoch with the current parameters.
pub trait TrainHooks {
    fn on_epoch(&mut self, _params: &Parameters, _record: &EpochRecord) {}
}

/// No-op hooks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Train on explicit (input, target) sequence pairs.
///
/// Each epoch shuffles the sequence order with a seeded stream, draws fresh
/// noise per sequence per pass, averages gradients over each mini-batch,
/// and applies one Adam step per mini-batch. Fully deterministic for a
/// given seed; runs single-threaded.
pub fn train_pairs(
    inputs: &[EncodedSequence],
    targets: &[EncodedSequence],
    spec: &NetworkSpec,
    config: &TrainingConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    if inputs.is_empty() {
        return Err(domain_err!("training set is empty"));
    }
    if inputs.len() != targets.len() {
        return Err(shape_err!(
            "{} input sequences but {} target sequences",
            inputs.len(),
            targets.len()
        ));
    }
    for (idx, (inp, tgt)) in inputs.iter().zip(targets.iter()).enumerate() {
        if inp.step_count() != tgt.step_count() {
            return Err(shape_err!(
                "sequence {}: input has {} steps, target {}",
                idx,
                inp.step_count(),
                tgt.step_count()
            ));
        }
        if inp.dim() != spec.input_dim() {
            return Err(shape_err!(
                "sequence {}: input dim {} != spec input dim {}",
                idx,
                inp.dim(),
                spec.input_dim()
            ));
        }
        if tgt.dim() != spec.output_dim() {
            return Err(shape_err!(
                "sequence {}: target dim {} != spec output dim {}",
                idx,
                tgt.dim(),
                spec.output_dim()
            ));
        }
    }
    config.validate(inputs.len())?;

    let num_sequences = inputs.len();
    let mut params = crate::net::init_parameters(spec, num_sequences, config.seed)?;
    let mut state = AdamState::new(&params);
    let mut log = Vec::with_capacity(config.epochs);

    let mut order: Vec<usize> = (0..num_sequences).collect();
    for epoch in 1..=config.epochs {
        let mut shuffle_rng = Stream::derive(config.seed, &[0x5u64, epoch as u64]);
        shuffle_rng.shuffle(&mut order);

        let mut sum_total = 0.0;
        let mut sum_lz = 0.0;
        let mut sum_lx = 0.0;
        let mut sum_sigma = 0.0;
        let mut clamp_warnings = 0u64;
        let mut clipped_batches = 0u32;

        for batch in order.chunks(config.batch_size) {
            let mut acc = GradientSet::zeros_like(&params);
            for &idx in batch {
                let mut noise =
                    Stream::derive(config.seed, &[0xe5u64, epoch as u64, idx as u64]);
                let trace = forward_sequence(
                    ForwardMode::OpenLoop(&inputs[idx]),
                    &params.init_latents[idx],
                    &params,
                    spec,
                    &mut noise,
                    None,
                )?;
                let (grads, loss) = backward_pairs(
                    &trace,
                    &inputs[idx],
                    &targets[idx],
                    &params,
                    spec,
                    config.meta_prior_w,
                    idx,
                )?;
                acc.add_assign(&grads);
                sum_total += loss.total;
                sum_lz += loss.l_z;
                sum_lx += loss.l_x;
                sum_sigma += trace.mean_sigma();
                clamp_warnings += loss.clamp_warnings;
            }
            acc.scale(1.0 / batch.len() as f64);
            if let Some(clip) = config.gradient_clip {
                let norm = acc.l2_norm();
                if norm > clip {
                    acc.scale(clip / norm);
                    clipped_batches += 1;
                }
            }
            adam_step(&mut params, &acc, &mut state, &config.adam)?;
        }

        let n = num_sequences as f64;
        let record = EpochRecord {
            epoch,
            total: sum_total / n,
            l_z: sum_lz / n,
            l_x: sum_lx / n,
            mean_sigma: sum_sigma / n,
            clamp_warnings,
            clipped_batches,
        };
        hooks.on_epoch(&params, &record);
        log.push(record);
    }
    Ok((params, log))
}

/// Train the self-predictive model on a dataset (targets = inputs).
pub fn train(
    dataset: &Dataset,
    spec: &NetworkSpec,
    config: &TrainingConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Parameters, Vec<EpochRecord>)> {
    train_pairs(dataset.sequences(), dataset.sequences(), spec, config, hooks)
}

/// Settings for the finite-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Sequence length of the random instance.
    pub steps: usize,
    pub meta_prior_w: f64,
    /// When set, overrides every sigma bias (large negative values give
    /// the deterministic-sigma configuration).
    pub sigma_bias: Option<f64>,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            steps: 5,
            meta_prior_w: 0.1,
            sigma_bias: None,
            fd_step: 1e-5,
        }
    }
}

/// Worst relative error per parameter block.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub coords: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
    pub worst: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst_block(&self) -> Option<&BlockCheck> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).unwrap())
    }
}

// Relative error uses max(|analytic|, |numeric|, 0.01) as the denominator,
// so near-zero coordinates are judged on a 1e-2-scaled absolute error.
fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-2);
    (a - b).abs() / denom
}

/// Compare analytic BPTT gradients against central finite differences of
/// the lower bound on a randomly built instance of `spec`.
///
/// The instance's noise draws are recorded once and replayed for every
/// perturbed evaluation, so both sides differentiate the same function.
/// Only free coordinates are probed: recurrent entries outside the
/// adjacency mask are constrained to zero and excluded.
pub fn gradient_check_with(
    spec: &NetworkSpec,
    seed: u64,
    tolerance: f64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if opts.steps < 2 {
        return Err(domain_err!("gradient check needs at least 2 steps"));
    }
    if !(opts.fd_step > 0.0) {
        return Err(domain_err!("finite-difference step must be positive"));
    }
    let mut params = crate::net::init_parameters(spec, 1, seed)?;
    if let Some(b) = opts.sigma_bias {
        for v in &mut params.b_sigma {
            *v = b;
        }
    }
    let c_total = spec.total_units();

    let mut data_rng = Stream::derive(seed, &[0xda7a]);
    let random_seq = |rng: &mut Stream, dim: usize| {
        let frames: Vec<Vec<f64>> = (0..opts.steps)
            .map(|_| {
                let logits: Vec<f64> = (0..dim).map(|_| rng.next_range(-1.0, 1.0)).collect();
                softmax(&logits)
            })
            .collect();
        EncodedSequence::new(frames)
    };
    let input = random_seq(&mut data_rng, spec.input_dim())?;
    let target = random_seq(&mut data_rng, spec.output_dim())?;

    // record the noise tape once
    let mut tape_rng = Stream::derive(seed, &[0xeb5]);
    let tape: Vec<f64> = (0..(opts.steps - 1) * c_total)
        .map(|_| tape_rng.standard_normal())
        .collect();

    let eval = |p: &Parameters| -> Result<f64> {
        let mut noise = ReplayNoise::new(tape.clone());
        let trace = forward_sequence(
            ForwardMode::OpenLoop(&input),
            &p.init_latents[0],
            p,
            spec,
            &mut noise,
            None,
        )?;
        Ok(lower_bound(&trace, &target, opts.meta_prior_w)?.total)
    };

    let mut noise = ReplayNoise::new(tape.clone());
    let trace = forward_sequence(
        ForwardMode::OpenLoop(&input),
        &params.init_latents[0],
        &params,
        spec,
        &mut noise,
        None,
    )?;
    let (analytic, _) = backward_pairs(
        &trace,
        &input,
        &target,
        &params,
        spec,
        opts.meta_prior_w,
        0,
    )?;

    let mask = spec.recurrent_mask();
    let h = opts.fd_step;
    let mut blocks = Vec::new();
    let mut worst: f64 = 0.0;
    let block_count = analytic.blocks().len();
    for block_idx in 0..block_count {
        let (name, _) = analytic.blocks()[block_idx];
        let len = analytic.blocks()[block_idx].1.len();
        let masked = name == "w_mu_c" || name == "w_sigma_c";
        let mut max_err: f64 = 0.0;
        let mut coords = 0;
        for i in 0..len {
            if masked && !mask[i] {
                continue;
            }
            coords += 1;
            let mut perturbed = params.clone();
            {
                let mut p_blocks = perturbed.param_blocks_mut();
                p_blocks[block_idx][i] += h;
            }
            let plus = eval(&perturbed)?;
            {
                let mut p_blocks = perturbed.param_blocks_mut();
                p_blocks[block_idx][i] -= 2.0 * h;
            }
            let minus = eval(&perturbed)?;
            let fd = (plus - minus) / (2.0 * h);
            let a = analytic.blocks()[block_idx].1[i];
            max_err = max_err.max(rel_err(a, fd));
        }
        worst = worst.max(max_err);
        blocks.push(BlockCheck {
            name,
            max_rel_err: max_err,
            coords,
        });
    }

    Ok(GradCheckReport {
        blocks,
        tolerance,
        worst,
        passed: worst <= tolerance,
    })
}

/// [`gradient_check_with`] using default options (stochastic sigma,
/// W = 0.1, 5 steps).
pub fn gradient_check(spec: &NetworkSpec, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    gradient_check_with(spec, seed, tolerance, &GradCheckOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_parameters;
    use crate::rng::ZeroNoise;
    use crate::seqdata::{encode_trajectory, DatasetMeta, GridCodec, Trajectory2D};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::new(vec![3, 2], vec![2.0, 4.0], 4, 4).unwrap()
    }

    fn uniform_seq(steps: usize, dim: usize) -> EncodedSequence {
        EncodedSequence::new(vec![vec![1.0 / dim as f64; dim]; steps]).unwrap()
    }

    #[test]
    fn kl_gradient_vanishes_at_standard_normal() {
        // all (mu, sigma) = (0, 1) is the stationary point of the KL term:
        // with W = 1 the z1 gradient through the KL path must vanish
        let spec = NetworkSpec::new(vec![2], vec![1.0], 2, 2).unwrap();
        let c = 2;
        let params = Parameters {
            w_mu_c: Mat::zeros(c, c),
            w_mu_x: Mat::zeros(c, 2),
            w_sigma_c: Mat::zeros(c, c),
            w_x_c: Mat::zeros(2, c),
            b_mu: vec![0.0; c],
            b_sigma: vec![0.0; c],
            b_x: vec![0.0; 2],
            init_latents: vec![vec![0.0; c]],
        };
        let seq = uniform_seq(4, 2);
        let trace = forward_sequence(
            ForwardMode::OpenLoop(&seq),
            &params.init_latents[0],
            &params,
            &spec,
            &mut ZeroNoise,
            None,
        )
        .unwrap();
        // zero net, zero eps: mu = 0, sigma = 1 everywhere
        let (grads, loss) =
            backward_sequence(&trace, &seq, &params, &spec, 1.0, 0).unwrap();
        assert_eq!(loss.l_z, 0.0);
        for (name, block) in grads.blocks() {
            for &g in block {
                assert!(
                    g.abs() < 1e-14,
                    "block {} has gradient {} at the KL stationary point",
                    name,
                    g
                );
            }
        }
    }

    #[test]
    fn perfect_output_zeroes_reconstruction_gradient() {
        // uniform target with zero output weights: output == target exactly,
        // so the softmax cross-entropy gradient (target - output) vanishes
        let spec = tiny_spec();
        let mut params = init_parameters(&spec, 1, 3).unwrap();
        for v in params.w_x_c.as_mut_slice() {
            *v = 0.0;
        }
        for v in &mut params.b_x {
            *v = 0.0;
        }
        let seq = uniform_seq(6, 4);
        let mut rng = Stream::new(9);
        let trace = forward_sequence(
            ForwardMode::OpenLoop(&seq),
            &params.init_latents[0],
            &params,
            &spec,
            &mut rng,
            None,
        )
        .unwrap();
        let (grads, _) = backward_sequence(&trace, &seq, &params, &spec, 0.0, 0).unwrap();
        for &g in grads.w_x_c.as_slice() {
            assert!(g.abs() < 1e-14);
        }
        for &g in &grads.b_x {
            assert!(g.abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_length_mismatch() {
        let spec = tiny_spec();
        let params = init_parameters(&spec, 1, 3).unwrap();
        let seq = uniform_seq(6, 4);
        let short = uniform_seq(5, 4);
        let trace = forward_sequence(
            ForwardMode::OpenLoop(&seq),
            &params.init_latents[0],
            &params,
            &spec,
            &mut ZeroNoise,
            None,
        )
        .unwrap();
        assert!(backward_sequence(&trace, &short, &params, &spec, 0.1, 0).is_err());
    }

    #[test]
    fn gradcheck_stochastic_config() {
        let spec = tiny_spec();
        let report = gradient_check(&spec, 11, 1e-5).unwrap();
        assert!(
            report.passed,
            "worst {} in block {:?}",
            report.worst,
            report.worst_block().map(|b| b.name)
        );
    }

    #[test]
    fn gradcheck_deterministic_sigma_config() {
        let spec = tiny_spec();
        let opts = GradCheckOptions {
            sigma_bias: Some(-40.0),
            ..GradCheckOptions::default()
        };
        let report = gradient_check_with(&spec, 12, 1e-6, &opts).unwrap();
        assert!(report.passed, "worst {}", report.worst);
    }

    #[test]
    fn gradcheck_spec_example_dimensions() {
        // 2 layers of 3 units, M = 4, T = 5
        let spec = NetworkSpec::new(vec![3, 3], vec![2.0, 4.0], 4, 4).unwrap();
        let report = gradient_check(&spec, 5, 1e-5).unwrap();
        assert!(report.passed, "worst {}", report.worst);
    }

    #[test]
    fn gradcheck_rejects_bad_input() {
        let spec = tiny_spec();
        let opts = GradCheckOptions {
            steps: 1,
            ..GradCheckOptions::default()
        };
        assert!(gradient_check_with(&spec, 1, 1e-5, &opts).is_err());
    }

    #[test]
    fn adam_first_step_magnitude_is_alpha() {
        let spec = NetworkSpec::new(vec![4], vec![2.0], 3, 3).unwrap();
        let mut params = init_parameters(&spec, 1, 0).unwrap();
        let before = params.clone();
        let mut grads = GradientSet::zeros_like(&params);
        for (_, block) in grads.blocks_mut() {
            for (k, v) in block.iter_mut().enumerate() {
                *v = if k % 2 == 0 { 0.5 } else { -2.0 };
            }
        }
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        let before_blocks = {
            let mut b = before.clone();
            let v: Vec<Vec<f64>> = b.param_blocks_mut().iter().map(|s| s.to_vec()).collect();
            v
        };
        let mut after = params.clone();
        for (pb, ab) in before_blocks.iter().zip(after.param_blocks_mut()) {
            for (p, a) in pb.iter().zip(ab.iter()) {
                let delta = (a - p).abs();
                assert!((delta - cfg.alpha).abs() < 1e-6, "delta {}", delta);
            }
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let spec = NetworkSpec::new(vec![3], vec![1.0], 2, 2).unwrap();
        let mut params = init_parameters(&spec, 1, 4).unwrap();
        let before = params.clone();
        let grads = GradientSet::zeros_like(&params);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let spec = NetworkSpec::new(vec![3], vec![1.0], 2, 2).unwrap();
        let mut params = init_parameters(&spec, 1, 4).unwrap();
        let mut grads = GradientSet::zeros_like(&params);
        grads.b_mu[0] = f64::NAN;
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &grads, &mut state, &AdamConfig::default());
        assert_eq!(err, Err(CoreError::NonFinite("b_mu")));
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // ascend f(p) = -sum (p - goal)^2; gradient = -2 (p - goal)
        let spec = NetworkSpec::new(vec![4], vec![2.0], 3, 3).unwrap();
        let mut params = init_parameters(&spec, 1, 8).unwrap();
        let goal = init_parameters(&spec, 1, 9).unwrap();
        let cfg = AdamConfig {
            alpha: 0.02,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&params);
        for _ in 0..600 {
            let mut grads = GradientSet::zeros_like(&params);
            {
                let mut g_blocks = grads.blocks_mut();
                let mut p = params.clone();
                let p_blocks = p.param_blocks_mut();
                let mut q = goal.clone();
                let q_blocks = q.param_blocks_mut();
                for ((gb, pb), qb) in g_blocks.iter_mut().zip(p_blocks).zip(q_blocks) {
                    for i in 0..gb.1.len() {
                        gb.1[i] = -2.0 * (pb[i] - qb[i]);
                    }
                }
            }
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        let mut p = params.clone();
        let mut q = goal.clone();
        for (pb, qb) in p.param_blocks_mut().iter().zip(q.param_blocks_mut()) {
            for (a, b) in pb.iter().zip(qb.iter()) {
                assert!((a - b).abs() < 1e-3, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn train_rejects_zero_epochs() {
        let codec = GridCodec::new(2, 2, 50.0).unwrap();
        let traj = Trajectory2D::new(vec![[0.4, 0.6]; 10]).unwrap();
        let dataset = Dataset::from_trajectories(
            vec![traj],
            codec,
            DatasetMeta {
                seed: 0,
                provenance: "test".into(),
            },
        )
        .unwrap();
        let spec = NetworkSpec::new(vec![3], vec![2.0], 4, 4).unwrap();
        let mut config = TrainingConfig::new(0.0, 1, 0);
        config.epochs = 0;
        config.batch_size = 1;
        assert!(train(&dataset, &spec, &config, &mut NoHooks).is_err());
    }

    #[test]
    fn train_is_deterministic() {
        let codec = GridCodec::new(3, 3, 80.0).unwrap();
        let points: Vec<[f64; 2]> = (0..12)
            .map(|i| {
                let u = i as f64 / 12.0 * core::f64::consts::TAU;
                [0.5 + 0.3 * libm::sin(u), 0.5 + 0.3 * libm::cos(u)]
            })
            .collect();
        let traj = Trajectory2D::new(points).unwrap();
        let dataset = Dataset::from_trajectories(
            vec![traj],
            codec,
            DatasetMeta {
                seed: 1,
                provenance: "test".into(),
            },
        )
        .unwrap();
        let spec = NetworkSpec::new(vec![4, 2], vec![2.0, 8.0], 9, 9).unwrap();
        let mut config = TrainingConfig::new(0.01, 30, 99);
        config.batch_size = 1;
        let (a, log_a) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
        let (b, log_b) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }
}
