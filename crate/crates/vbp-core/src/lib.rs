//! Variational Bayes predictive-coding multiple-timescale RNN.
//!
//! A stochastic recurrent network whose per-step latent states carry a
//! learned mean and variance, trained by maximizing a weighted evidence
//! lower bound
//!
//! ```text
//! L = W * L_z + (1 - W) * L_x
//! ```
//!
//! where `L_z` is the closed-form negative KL divergence between the
//! per-step latent posterior and a unit Gaussian prior, `L_x` is the
//! log-likelihood of softmax-coded sensory frames, and the meta-prior `W`
//! arbitrates between deterministic and stochastic dynamics.
//!
//! The crate is `no_std` (with `alloc`) and has no IO: file formats, CSV
//! logs, plots, and the command-line driver live in the companion `vbp-cli`
//! crate.
//!
//! Module map:
//!
//! - [`seqdata`] — 2-D trajectories and the softmax grid codec
//! - [`net`] — network parameterization, stochastic forward pass, lower bound
//! - [`train`] — BPTT gradients, Adam, the training loop, gradient checking
//! - [`pipeline`] — pFSM label sampling, prototype rendering, target
//!   generation and classification
//! - [`analysis`] — divergence steps, N-gram KL, periodicity, sigma stats
//! - [`rng`] — deterministic seedable random streams

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod mat;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod seqdata;
pub mod train;

pub use error::{CoreError, Result};
