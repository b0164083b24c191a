//! Network parameterization, stochastic forward dynamics, and the weighted
//! lower bound.
//!
//! Context units are grouped into layers with per-layer time constants.
//! Each unit's internal state is sampled through the reparameterization
//! `z = mu + sigma * eps` with
//!
//! ```text
//! mu_t,i    = (1 - 1/tau_i) z_{t-1,i}
//!             + (1/tau_i) (sum_j wmc_ij c_{t-1,j} + sum_k wmx_ik x_{t-1,k} + bm_i)
//! sigma_t,i = exp(0.5 (sum_j wsc_ij c_{t-1,j} + bs_i))
//! c_t,i     = tanh(z_t,i)
//! ```
//!
//! and the prediction output is a softmax over an affine map of the lowest
//! layer's activations. The training objective is
//! `L = W * L_z + (1 - W) * L_x`, with `L_z` the closed-form negative KL
//! against a unit Gaussian prior (summed from step 2, where the recognition
//! model first defines `mu`/`sigma`) and `L_x` the log-likelihood of the
//! target frames.
//!
//! Wiring: a layer's units receive recurrent connections (mu and sigma
//! paths alike) from their own layer and the layers directly below and
//! above; sensory input feeds only the lowest layer's mu path, and the
//! output reads only the lowest layer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::rng::{NoiseSource, Stream};
use crate::seqdata::{softmax, EncodedSequence};
use crate::{domain_err, shape_err};

/// Floor applied to output probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layer sizes, time constants, and IO dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
    time_constants: Vec<f64>,
    input_dim: usize,
    output_dim: usize,
}

impl NetworkSpec {
    /// Layers are listed lowest (fastest) to highest (slowest); time
    /// constants must be >= 1 and non-decreasing.
    pub fn new(
        layer_sizes: Vec<usize>,
        time_constants: Vec<f64>,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        if layer_sizes.is_empty() {
            return Err(domain_err!("network needs at least one layer"));
        }
        if layer_sizes.len() != time_constants.len() {
            return Err(shape_err!(
                "{} layer sizes but {} time constants",
                layer_sizes.len(),
                time_constants.len()
            ));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(domain_err!("layer sizes must be positive"));
        }
        if input_dim == 0 || output_dim == 0 {
            return Err(domain_err!("input/output dimensions must be positive"));
        }
        for w in time_constants.windows(2) {
            if w[1] < w[0] {
                return Err(domain_err!(
                    "time constants must be non-decreasing from lowest to highest layer"
                ));
            }
        }
        if time_constants.iter().any(|&t| !(t >= 1.0) || !t.is_finite()) {
            return Err(domain_err!("time constants must be >= 1"));
        }
        Ok(NetworkSpec {
            layer_sizes,
            time_constants,
            input_dim,
            output_dim,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn time_constants(&self) -> &[f64] {
        &self.time_constants
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len()
    }

    /// Total number of context units C.
    pub fn total_units(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    /// Size of the lowest (sensory-facing) layer.
    pub fn lowest_size(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Index range of layer `k` within the concatenated unit vector.
    pub fn layer_range(&self, k: usize) -> core::ops::Range<usize> {
        let start: usize = self.layer_sizes[..k].iter().sum();
        start..start + self.layer_sizes[k]
    }

    /// Layer index of unit `i`.
    pub fn unit_layer(&self, i: usize) -> usize {
        let mut acc = 0;
        for (k, &n) in self.layer_sizes.iter().enumerate() {
            acc += n;
            if i < acc {
                return k;
            }
        }
        panic!("unit index {} out of range", i);
    }

    /// Per-unit time constants, expanded from per-layer values.
    pub fn unit_time_constants(&self) -> Vec<f64> {
        let mut taus = Vec::with_capacity(self.total_units());
        for (k, &n) in self.layer_sizes.iter().enumerate() {
            taus.extend(core::iter::repeat(self.time_constants[k]).take(n));
        }
        taus
    }

    /// Whether units of layer `a` receive recurrent input from layer `b`.
    pub fn layers_connected(&self, a: usize, b: usize) -> bool {
        a.abs_diff(b) <= 1
    }

    /// C x C mask of allowed recurrent connections (row = receiving unit).
    pub fn recurrent_mask(&self) -> Vec<bool> {
        let c = self.total_units();
        let mut mask = vec![false; c * c];
        for a in 0..self.layer_count() {
            for b in 0..self.layer_count() {
                if !self.layers_connected(a, b) {
                    continue;
                }
                for i in self.layer_range(a) {
                    for j in self.layer_range(b) {
                        mask[i * c + j] = true;
                    }
                }
            }
        }
        mask
    }

    /// Recurrent fan-in of a unit in layer `k` (drives init scaling).
    pub fn recurrent_fan_in(&self, k: usize) -> usize {
        (0..self.layer_count())
            .filter(|&b| self.layers_connected(k, b))
            .map(|b| self.layer_sizes[b])
            .sum()
    }
}

/// All learnable quantities: connection weights, biases, and the
/// per-training-sequence initial latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    /// Recurrent weights into mu, C x C, zero outside the adjacency mask.
    pub w_mu_c: Mat,
    /// Input weights into mu for the lowest layer only, n_lowest x input_dim.
    pub w_mu_x: Mat,
    /// Recurrent weights into the sigma preactivation, C x C, masked.
    pub w_sigma_c: Mat,
    /// Output weights reading the lowest layer, output_dim x n_lowest.
    pub w_x_c: Mat,
    pub b_mu: Vec<f64>,
    pub b_sigma: Vec<f64>,
    pub b_x: Vec<f64>,
    /// One learned initial latent state z_1 per training sequence.
    pub init_latents: Vec<Vec<f64>>,
}

impl Parameters {
    /// Check that all shapes are consistent with `spec` and that weights
    /// outside the connectivity rule are exactly zero.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        let c = spec.total_units();
        let n0 = spec.lowest_size();
        if self.w_mu_c.rows() != c || self.w_mu_c.cols() != c {
            return Err(shape_err!("w_mu_c must be {0}x{0}", c));
        }
        if self.w_sigma_c.rows() != c || self.w_sigma_c.cols() != c {
            return Err(shape_err!("w_sigma_c must be {0}x{0}", c));
        }
        if self.w_mu_x.rows() != n0 || self.w_mu_x.cols() != spec.input_dim() {
            return Err(shape_err!("w_mu_x must be {}x{}", n0, spec.input_dim()));
        }
        if self.w_x_c.rows() != spec.output_dim() || self.w_x_c.cols() != n0 {
            return Err(shape_err!("w_x_c must be {}x{}", spec.output_dim(), n0));
        }
        if self.b_mu.len() != c || self.b_sigma.len() != c {
            return Err(shape_err!("bias vectors must have length {}", c));
        }
        if self.b_x.len() != spec.output_dim() {
            return Err(shape_err!("b_x must have length {}", spec.output_dim()));
        }
        for (s, z1) in self.init_latents.iter().enumerate() {
            if z1.len() != c {
                return Err(shape_err!("init latent {} must have length {}", s, c));
            }
        }
        let mask = spec.recurrent_mask();
        for i in 0..c {
            for j in 0..c {
                if !mask[i * c + j]
                    && (self.w_mu_c.get(i, j) != 0.0 || self.w_sigma_c.get(i, j) != 0.0)
                {
                    return Err(CoreError::InvariantViolation(alloc::format!(
                        "recurrent weight ({}, {}) outside the adjacency mask is nonzero",
                        i,
                        j
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_sequences(&self) -> usize {
        self.init_latents.len()
    }
}

/// Draw order: w_mu_c, w_mu_x, w_sigma_c, w_x_c row-major over allowed
/// entries, then init latents; fixed so a seed reproduces parameters
/// exactly.
///
/// Weights are uniform in [-s, s] with `s = 1/sqrt(fan_in)` per receiving
/// unit; biases start at zero (so sigma starts near exp(0) = 1) and initial
/// latent states are drawn from N(0, 0.01).
pub fn init_parameters(spec: &NetworkSpec, num_sequences: usize, seed: u64) -> Result<Parameters> {
    if num_sequences == 0 {
        return Err(domain_err!("need at least one training sequence"));
    }
    let c = spec.total_units();
    let n0 = spec.lowest_size();
    let mask = spec.recurrent_mask();
    let mut rng = Stream::derive(seed, &[0x9a7a]);

    let recurrent = |rng: &mut Stream| {
        let mut m = Mat::zeros(c, c);
        for i in 0..c {
            let fan = spec.recurrent_fan_in(spec.unit_layer(i));
            let s = 1.0 / libm::sqrt(fan as f64);
            for j in 0..c {
                if mask[i * c + j] {
                    m.set(i, j, rng.next_range(-s, s));
                }
            }
        }
        m
    };

    let w_mu_c = recurrent(&mut rng);
    let s_in = 1.0 / libm::sqrt(spec.input_dim() as f64);
    let w_mu_x = Mat::from_fn(n0, spec.input_dim(), |_, _| rng.next_range(-s_in, s_in));
    let w_sigma_c = recurrent(&mut rng);
    let s_out = 1.0 / libm::sqrt(n0 as f64);
    let w_x_c = Mat::from_fn(spec.output_dim(), n0, |_, _| rng.next_range(-s_out, s_out));

    let init_latents = (0..num_sequences)
        .map(|_| (0..c).map(|_| 0.1 * rng.standard_normal()).collect())
        .collect();

    Ok(Parameters {
        w_mu_c,
        w_mu_x,
        w_sigma_c,
        w_x_c,
        b_mu: vec![0.0; c],
        b_sigma: vec![0.0; c],
        b_x: vec![0.0; spec.output_dim()],
        init_latents,
    })
}

/// One step of latent dynamics for all units.
#[derive(Debug, Clone)]
pub struct StepState {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
}

/// Advance the latent state one step given the previous sampled state,
/// previous activations, previous input frame, and externally supplied
/// per-unit noise.
///
/// The leak term mixes the previous *sampled* state `z_{t-1}`, not its
/// mean.
pub fn step_dynamics(
    prev_z: &[f64],
    prev_c: &[f64],
    prev_input: &[f64],
    eps: &[f64],
    params: &Parameters,
    spec: &NetworkSpec,
) -> Result<StepState> {
    let c_total = spec.total_units();
    if prev_z.len() != c_total || prev_c.len() != c_total || eps.len() != c_total {
        return Err(shape_err!("state vectors must have length {}", c_total));
    }
    if prev_input.len() != spec.input_dim() {
        return Err(shape_err!(
            "input frame has length {}, expected {}",
            prev_input.len(),
            spec.input_dim()
        ));
    }
    let taus = spec.unit_time_constants();

    // mu preactivation: recurrent + input (lowest layer only) + bias
    let mut pre_mu = params.b_mu.clone();
    params.w_mu_c.matvec_add(prev_c, &mut pre_mu);
    let n0 = spec.lowest_size();
    let mut input_drive = vec![0.0; n0];
    params.w_mu_x.matvec_add(prev_input, &mut input_drive);
    for (p, d) in pre_mu[..n0].iter_mut().zip(input_drive.iter()) {
        *p += d;
    }

    // sigma preactivation: recurrent + bias only (no input path)
    let mut pre_sigma = params.b_sigma.clone();
    params.w_sigma_c.matvec_add(prev_c, &mut pre_sigma);

    let mut mu = vec![0.0; c_total];
    let mut sigma = vec![0.0; c_total];
    let mut z = vec![0.0; c_total];
    let mut act = vec![0.0; c_total];
    for i in 0..c_total {
        let leak = 1.0 - 1.0 / taus[i];
        mu[i] = leak * prev_z[i] + (1.0 / taus[i]) * pre_mu[i];
        sigma[i] = libm::exp(0.5 * pre_sigma[i]);
        z[i] = mu[i] + sigma[i] * eps[i];
        act[i] = libm::tanh(z[i]);
    }
    Ok(StepState {
        mu,
        sigma,
        z,
        c: act,
    })
}

/// Softmax readout over an affine map of the lowest layer's activations.
pub fn output_distribution(c_lowest: &[f64], params: &Parameters) -> Vec<f64> {
    let mut logits = params.b_x.clone();
    params.w_x_c.matvec_add(c_lowest, &mut logits);
    softmax(&logits)
}

/// How the forward pass obtains its input frames.
#[derive(Debug, Clone, Copy)]
pub enum ForwardMode<'a> {
    /// Teacher forcing: the sequence supplies every input frame.
    OpenLoop(&'a EncodedSequence),
    /// The model's own prediction at step t-1 becomes the input at step t.
    ClosedLoop { steps: usize },
}

/// Full record of one forward pass: per-step, per-unit mu, sigma, eps, z, c
/// plus the per-step output distributions.
///
/// Step 1 has no recognition model: `z_1` is the supplied initial latent
/// state, and row 0 of `mu`/`sigma`/`eps` holds the placeholders (0, 1, 0).
/// Sums over the latent statistics therefore start at step 2.
#[derive(Debug, Clone)]
pub struct LatentTrace {
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    step_count: usize,
    unit_count: usize,
}

impl LatentTrace {
    /// Assemble a trace from raw per-step arrays (row 0 = step-1
    /// placeholders). Mainly useful for constructing reference traces in
    /// tests and oracles.
    pub fn from_parts(
        mu: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        eps: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let step_count = mu.len();
        if step_count < 2 {
            return Err(domain_err!("trace needs at least 2 steps"));
        }
        let unit_count = mu[0].len();
        for (name, field) in [
            ("mu", &mu),
            ("sigma", &sigma),
            ("eps", &eps),
            ("z", &z),
            ("c", &c),
        ] {
            if field.len() != step_count || field.iter().any(|row| row.len() != unit_count) {
                return Err(shape_err!("trace field {} has inconsistent shape", name));
            }
        }
        if outputs.len() != step_count {
            return Err(shape_err!("outputs must have one row per step"));
        }
        Ok(LatentTrace {
            mu,
            sigma,
            eps,
            z,
            c,
            outputs,
            step_count,
            unit_count,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn unit_count(&self) -> usize {
        self.unit_count
    }

    /// Mean sigma over all units and steps >= 2.
    pub fn mean_sigma(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for row in self.sigma.iter().skip(1) {
            for &s in row {
                sum += s;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Run the dynamics over a sequence.
///
/// Step 1 uses `init_latent` directly (`c_1 = tanh(z_1)`, first output from
/// `c_1`); steps 2..T apply [`step_dynamics`]. In closed-loop mode the
/// input at step t is the output distribution of step t-1; no external
/// frames are consumed. `noise_override`, when set, adds independent
/// N(0, override^2) noise to every unit's sampled state at every step
/// (including step 1), the regime used to synthesize fluctuated targets.
///
/// Noise draw order per step: `eps` for all units, then override noise for
/// all units. The deterministic limit is `noise = &mut ZeroNoise` with no
/// override.
pub fn forward_sequence(
    mode: ForwardMode<'_>,
    init_latent: &[f64],
    params: &Parameters,
    spec: &NetworkSpec,
    noise: &mut dyn NoiseSource,
    noise_override: Option<f64>,
) -> Result<LatentTrace> {
    let steps = match mode {
        ForwardMode::OpenLoop(seq) => {
            if seq.dim() != spec.input_dim() {
                return Err(shape_err!(
                    "sequence dim {} does not match input dim {}",
                    seq.dim(),
                    spec.input_dim()
                ));
            }
            seq.step_count()
        }
        ForwardMode::ClosedLoop { steps } => {
            if spec.input_dim() != spec.output_dim() {
                return Err(domain_err!(
                    "closed-loop generation requires input_dim == output_dim"
                ));
            }
            steps
        }
    };
    if steps < 2 {
        return Err(domain_err!("sequence must have at least 2 steps, got {}", steps));
    }
    let c_total = spec.total_units();
    if init_latent.len() != c_total {
        return Err(shape_err!(
            "initial latent state has length {}, expected {}",
            init_latent.len(),
            c_total
        ));
    }
    if let Some(s) = noise_override {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(domain_err!("noise override must be non-negative, got {}", s));
        }
    }

    let mut mu = Vec::with_capacity(steps);
    let mut sigma = Vec::with_capacity(steps);
    let mut eps = Vec::with_capacity(steps);
    let mut z = Vec::with_capacity(steps);
    let mut act = Vec::with_capacity(steps);
    let mut outputs = Vec::with_capacity(steps);

    // step 1: initial latent state, placeholders for (mu, sigma, eps)
    let mut z1 = init_latent.to_vec();
    if let Some(s) = noise_override {
        for v in &mut z1 {
            *v += s * noise.standard_normal();
        }
    }
    let c1: Vec<f64> = z1.iter().map(|&v| libm::tanh(v)).collect();
    mu.push(vec![0.0; c_total]);
    sigma.push(vec![1.0; c_total]);
    eps.push(vec![0.0; c_total]);
    outputs.push(output_distribution(&c1[..spec.lowest_size()], params));
    z.push(z1);
    act.push(c1);

    for t in 1..steps {
        let eps_t: Vec<f64> = (0..c_total).map(|_| noise.standard_normal()).collect();
        let input_frame: &[f64] = match mode {
            ForwardMode::OpenLoop(seq) => seq.frame(t - 1),
            ForwardMode::ClosedLoop { .. } => &outputs[t - 1],
        };
        let mut state = step_dynamics(&z[t - 1], &act[t - 1], input_frame, &eps_t, params, spec)?;
        if let Some(s) = noise_override {
            for (zi, ci) in state.z.iter_mut().zip(state.c.iter_mut()) {
                *zi += s * noise.standard_normal();
                *ci = libm::tanh(*zi);
            }
        }
        outputs.push(output_distribution(&state.c[..spec.lowest_size()], params));
        mu.push(state.mu);
        sigma.push(state.sigma);
        eps.push(eps_t);
        z.push(state.z);
        act.push(state.c);
    }

    Ok(LatentTrace {
        mu,
        sigma,
        eps,
        z,
        c: act,
        outputs,
        step_count: steps,
        unit_count: c_total,
    })
}

/// Closed-form regularization term
/// `(1/2C) sum_{t>=2} sum_i (1 + log sigma^2 - mu^2 - sigma^2)`.
///
/// Equals minus the average KL divergence from the per-unit posterior to a
/// unit Gaussian; always <= 0, with 0 exactly at (mu, sigma) = (0, 1).
pub fn kl_term(trace: &LatentTrace) -> Result<f64> {
    let c = trace.unit_count() as f64;
    let mut sum = 0.0;
    for t in 1..trace.step_count() {
        for i in 0..trace.unit_count() {
            let mu = trace.mu[t][i];
            let sigma = trace.sigma[t][i];
            if !(sigma > 0.0) {
                return Err(CoreError::InvariantViolation(alloc::format!(
                    "sigma at step {} unit {} is {}",
                    t + 1,
                    i,
                    sigma
                )));
            }
            let var = sigma * sigma;
            sum += 1.0 + libm::log(var) - mu * mu - var;
        }
    }
    Ok(sum / (2.0 * c))
}

/// Log-likelihood of the target frames under the per-step output
/// distributions: `sum_t sum_m target_{t,m} log output_{t,m}`.
///
/// Probabilities are floored at [`PROB_FLOOR`] inside the log; the second
/// element counts how many floored entries carried target mass.
pub fn reconstruction_term_counted(
    trace: &LatentTrace,
    target: &EncodedSequence,
) -> Result<(f64, u64)> {
    if trace.step_count() != target.step_count() {
        return Err(shape_err!(
            "trace has {} steps but target has {}",
            trace.step_count(),
            target.step_count()
        ));
    }
    if trace.outputs[0].len() != target.dim() {
        return Err(shape_err!(
            "output dim {} does not match target dim {}",
            trace.outputs[0].len(),
            target.dim()
        ));
    }
    let mut sum = 0.0;
    let mut clamped = 0u64;
    for (out, tgt) in trace.outputs.iter().zip(target.frames()) {
        for (&o, &p) in out.iter().zip(tgt.iter()) {
            if p == 0.0 {
                continue;
            }
            let q = if o < PROB_FLOOR {
                clamped += 1;
                PROB_FLOOR
            } else {
                o
            };
            sum += p * libm::log(q);
        }
    }
    Ok((sum, clamped))
}

/// [`reconstruction_term_counted`] without the clamp counter.
pub fn reconstruction_term(trace: &LatentTrace, target: &EncodedSequence) -> Result<f64> {
    reconstruction_term_counted(trace, target).map(|(v, _)| v)
}

/// The two terms of the lower bound and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Regularization term L_z (closed-form negative KL).
    pub l_z: f64,
    /// Reconstruction log-likelihood L_x.
    pub l_x: f64,
    /// W * l_z + (1 - W) * l_x.
    pub total: f64,
    pub meta_prior_w: f64,
    /// Output probabilities floored during the L_x computation.
    pub clamp_warnings: u64,
}

/// Weighted lower bound `L = W * L_z + (1 - W) * L_x`.
pub fn lower_bound(
    trace: &LatentTrace,
    target: &EncodedSequence,
    meta_prior_w: f64,
) -> Result<LossBreakdown> {
    if !(0.0..=1.0).contains(&meta_prior_w) {
        return Err(domain_err!(
            "meta-prior W must lie in [0,1], got {}",
            meta_prior_w
        ));
    }
    let l_z = kl_term(trace)?;
    let (l_x, clamp_warnings) = reconstruction_term_counted(trace, target)?;
    Ok(LossBreakdown {
        l_z,
        l_x,
        total: meta_prior_w * l_z + (1.0 - meta_prior_w) * l_x,
        meta_prior_w,
        clamp_warnings,
    })
}
