//! Experiment driver for the stochastic multiple-timescale network in
//! `vbp-core`: configuration presets, on-disk formats, CSV/SVG reports,
//! and the `vbp` command-line pipeline.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod logging;
pub mod svg;
