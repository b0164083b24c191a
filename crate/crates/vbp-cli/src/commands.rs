//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use vbp_core::analysis::{periodicity_score, sigma_statistics};
use vbp_core::net::{forward_sequence, ForwardMode};
use vbp_core::rng::Stream;
use vbp_core::train::{gradient_check_with, GradCheckOptions};

use crate::config::RunConfig;
use crate::experiment::{self, WRunEvaluation};
use crate::formats::{
    load_checkpoint, load_dataset, save_checkpoint, save_dataset, save_labels, save_pfsm,
    Checkpoint,
};
use crate::logging::{write_csv, CsvLogHooks};
use crate::svg::{line_chart, Series, COLORS};

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_resolved_config(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let mut resolved = cfg.clone();
    resolved.seed = seed;
    resolved.write(&out.join("config.resolved.toml"))
}

/// `synth`: pFSM -> labels -> rendering -> target generator -> targets,
/// plus the classifier used by later analysis.
pub fn cmd_synth(cfg: &RunConfig, seed: u64, out: &Path, renderer_only: bool) -> Result<()> {
    ensure_out(out)?;
    write_resolved_config(cfg, seed, out)?;

    let rendering = experiment::render_surrogate(cfg, seed)?;
    save_pfsm(&rendering.fsm, &out.join("pfsm.txt"))?;
    save_labels(&rendering.labels, &out.join("labels.txt"))?;
    save_dataset(&rendering.dataset, &out.join("rendered.vbpdata"))?;
    println!(
        "rendered {} steps ({} emissions) into {} training chunks",
        rendering.trajectory.step_count(),
        rendering.labels.compressed().len(),
        rendering.dataset.len()
    );
    let mut provenance = vec![
        format!("seed {}", seed),
        format!("preset {}", cfg.preset),
        format!(
            "labels sampled from the built-in grammar, {} emissions",
            cfg.pipeline.prototype_count
        ),
        format!(
            "rendered at {} steps/cycle, jitter {}/{}, tremor {}",
            cfg.pipeline.steps_per_cycle,
            cfg.pipeline.amplitude_jitter,
            cfg.pipeline.period_jitter,
            cfg.pipeline.tremor
        ),
    ];

    if renderer_only {
        save_dataset(&rendering.dataset, &out.join("targets.vbpdata"))?;
        provenance.push("targets = rendered chunks (renderer-only mode)".into());
    } else {
        let spec = cfg.network_spec()?;
        let mut hooks = CsvLogHooks::create(&out.join("targen_log.csv"))?;
        let (targen, targen_log) =
            experiment::train_target_generator(cfg, &rendering, seed, &mut hooks)?;
        hooks.finish()?;
        save_checkpoint(
            &Checkpoint {
                spec: spec.clone(),
                params: targen.clone(),
                seed,
                meta_prior_w: 0.0,
                alpha: cfg.pipeline.targen_alpha,
                epochs_trained: cfg.pipeline.targen_epochs,
                train_len: cfg.pipeline.targen_sequence_length,
                provenance: "target generator".into(),
            },
            &out.join("targen.vbpckpt"),
        )?;
        println!(
            "target generator trained: final sigma {:.4}",
            targen_log.last().map(|r| r.mean_sigma).unwrap_or(f64::NAN)
        );
        let targets = experiment::synthesize_targets(cfg, &targen, seed)?;
        save_dataset(&targets, &out.join("targets.vbpdata"))?;
        provenance.push(format!(
            "targets: {} slices of {} steps from a {}-step noisy free-run (sigma {})",
            cfg.pipeline.slice_count,
            cfg.pipeline.slice_length,
            cfg.pipeline.total_steps,
            cfg.pipeline.noise_sigma
        ));
        println!("synthesized {} target sequences", targets.len());
    }

    let mut hooks = CsvLogHooks::create(&out.join("classifier_log.csv"))?;
    let (classifier, classifier_log) =
        experiment::train_classifier(cfg, &rendering, seed, &mut hooks)?;
    hooks.finish()?;
    save_checkpoint(
        &Checkpoint {
            spec: cfg.classifier_spec()?,
            params: classifier,
            seed,
            meta_prior_w: 0.0,
            alpha: cfg.classifier.alpha,
            epochs_trained: cfg.classifier.epochs,
            train_len: cfg.pipeline.targen_sequence_length,
            provenance: "label classifier".into(),
        },
        &out.join("classifier.vbpckpt"),
    )?;
    println!(
        "classifier trained: final L_x {:.4}",
        classifier_log.last().map(|r| r.l_x).unwrap_or(f64::NAN)
    );
    provenance.push("classifier trained on rendered chunks with per-step labels".into());
    std::fs::write(out.join("provenance.txt"), provenance.join("\n") + "\n")?;
    Ok(())
}

/// `train`: fit the predictive model at one meta-prior or sweep all
/// configured values. Sweep runs are independent and may execute on
/// `threads` workers; each run stays bit-deterministic regardless.
pub fn cmd_train(
    cfg: &RunConfig,
    seed: u64,
    dataset_path: &Path,
    w: Option<f64>,
    sweep: bool,
    threads: usize,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    write_resolved_config(cfg, seed, out)?;
    let targets = load_dataset(dataset_path)?;
    let spec = cfg.network_spec()?;
    if targets.codec().dim() != spec.input_dim() {
        bail!(
            "dataset grid is {}-dimensional but the configured network expects {}",
            targets.codec().dim(),
            spec.input_dim()
        );
    }

    let ws: Vec<f64> = if sweep {
        cfg.training.sweep_w.clone()
    } else {
        vec![w.unwrap_or(cfg.training.meta_prior_w)]
    };
    let dataset_name = dataset_path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset")
        .to_string();
    let train_len = targets.raw().first().map(|t| t.step_count()).unwrap_or(0);

    let run_one = |idx: usize, w: f64| -> Result<vbp_core::train::EpochRecord> {
        let run_seed = seed + idx as u64;
        let stem = format!("vbp_w{}", w);
        let mut hooks = CsvLogHooks::create(&out.join(format!("{}_log.csv", stem)))?;
        if cfg.training.checkpoint_every > 0 {
            hooks = hooks.with_checkpoints(
                cfg.training.checkpoint_every,
                out.join(&stem),
                spec.clone(),
                run_seed,
                w,
                cfg.training.alpha,
                train_len,
            );
        }
        let (params, log) = experiment::train_vbp(cfg, &targets, w, run_seed, &mut hooks)?;
        hooks.finish()?;
        save_checkpoint(
            &Checkpoint {
                spec: spec.clone(),
                params,
                seed: run_seed,
                meta_prior_w: w,
                alpha: cfg.training.alpha,
                epochs_trained: cfg.training.epochs,
                train_len,
                provenance: format!("trained on {}", dataset_name),
            },
            &out.join(format!("{}.vbpckpt", stem)),
        )?;
        log.last().copied().ok_or_else(|| anyhow!("empty training log"))
    };

    let mut finals: Vec<(f64, vbp_core::train::EpochRecord)> = Vec::new();
    for chunk in ws
        .iter()
        .enumerate()
        .collect::<Vec<_>>()
        .chunks(threads.max(1))
    {
        let results: Vec<(f64, Result<vbp_core::train::EpochRecord>)> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&(idx, &w)| {
                        let run = &run_one;
                        scope.spawn(move || (w, run(idx, w)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
        for (w, result) in results {
            finals.push((w, result?));
        }
    }

    let mut combined: Vec<Vec<String>> = Vec::new();
    for (w, last) in &finals {
        println!(
            "W = {}: L {:.4} L_z {:.4} L_x {:.4} mean sigma {:.4}",
            w, last.total, last.l_z, last.l_x, last.mean_sigma
        );
        combined.push(vec![
            w.to_string(),
            last.total.to_string(),
            last.l_z.to_string(),
            last.l_x.to_string(),
            last.mean_sigma.to_string(),
        ]);
    }
    if sweep {
        write_csv(
            &out.join("sweep_summary.csv"),
            &["W", "L", "L_z", "L_x", "mean_sigma"],
            &combined,
        )?;
    }
    Ok(())
}

/// `generate`: closed-loop (or open-loop teacher-forced) runs from a
/// checkpoint, written as decoded 2-D CSV plus dataset and optional trace.
pub fn cmd_generate(
    cfg: &RunConfig,
    seed: u64,
    checkpoint: &Path,
    steps: Option<usize>,
    sequence: Option<usize>,
    noise: Option<f64>,
    trace: bool,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    write_resolved_config(cfg, seed, out)?;
    let ck = load_checkpoint(checkpoint)?;
    let codec = cfg.grid_codec()?;
    if codec.dim() != ck.spec.output_dim() {
        bail!(
            "configured codec is {}-dimensional but checkpoint outputs {}",
            codec.dim(),
            ck.spec.output_dim()
        );
    }
    let steps = steps.unwrap_or(ck.train_len.max(2));
    let indices: Vec<usize> = match sequence {
        Some(i) if i >= ck.params.init_latents.len() => {
            bail!(
                "sequence {} out of range ({} initial latent states)",
                i,
                ck.params.init_latents.len()
            )
        }
        Some(i) => vec![i],
        None => (0..ck.params.init_latents.len()).collect(),
    };

    let mut rows = Vec::new();
    for &idx in &indices {
        let mut rng = Stream::derive(seed, &[0x9e7, idx as u64]);
        let run = forward_sequence(
            ForwardMode::ClosedLoop { steps },
            &ck.params.init_latents[idx],
            &ck.params,
            &ck.spec,
            &mut rng,
            noise,
        )
        .map_err(|e| anyhow!("generation: {}", e))?;
        let traj = experiment::decode_outputs(&run.outputs, &codec)?;
        for (t, p) in traj.points().iter().enumerate() {
            rows.push(vec![
                idx.to_string(),
                (t + 1).to_string(),
                p[0].to_string(),
                p[1].to_string(),
            ]);
        }
        if trace {
            let mut trace_rows = Vec::new();
            for t in 0..run.step_count() {
                for u in 0..run.unit_count() {
                    trace_rows.push(vec![
                        (t + 1).to_string(),
                        u.to_string(),
                        run.mu[t][u].to_string(),
                        run.sigma[t][u].to_string(),
                        run.z[t][u].to_string(),
                        run.c[t][u].to_string(),
                    ]);
                }
            }
            write_csv(
                &out.join(format!("trace_seq{}.csv", idx)),
                &["step", "unit", "mu", "sigma", "z", "c"],
                &trace_rows,
            )?;
        }
    }
    write_csv(
        &out.join("generated.csv"),
        &["sequence", "step", "x", "y"],
        &rows,
    )?;
    println!(
        "generated {} sequences of {} steps into {}",
        indices.len(),
        steps,
        out.display()
    );
    Ok(())
}

/// `classify`: label every sequence of a dataset with a classifier
/// checkpoint.
pub fn cmd_classify(
    cfg: &RunConfig,
    seed: u64,
    classifier: &Path,
    dataset: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    write_resolved_config(cfg, seed, out)?;
    let ck = load_checkpoint(classifier)?;
    if ck.spec.output_dim() != 3 {
        bail!("checkpoint is not a 3-way classifier");
    }
    let data = load_dataset(dataset)?;
    let seg = vbp_core::pipeline::SegmentationConfig::for_nominal(cfg.nominal_emission_steps());
    for (idx, seq) in data.sequences().iter().enumerate() {
        let labels = vbp_core::pipeline::classify(&ck.params, &ck.spec, seq, &seg)
            .map_err(|e| anyhow!("classifying sequence {}: {}", idx, e))?;
        save_labels(&labels, &out.join(format!("labels_seq{}.txt", idx)))?;
        println!("sequence {}: {}", idx, labels.compressed_string());
    }
    Ok(())
}

/// `analyze`: divergence steps, Tri-gram KL, periodicity, and sigma traces
/// for a set of trained checkpoints against their training targets.
#[allow(clippy::too_many_arguments)]
pub fn cmd_analyze(
    cfg: &RunConfig,
    seed: u64,
    targets_path: &Path,
    checkpoints: &[PathBuf],
    classifier_path: &Path,
    targen_path: &Path,
    out: &Path,
) -> Result<()> {
    ensure_out(out)?;
    write_resolved_config(cfg, seed, out)?;
    let targets = load_dataset(targets_path)?;
    let classifier = load_checkpoint(classifier_path)?;
    let targen = load_checkpoint(targen_path)?;
    let codec = cfg.grid_codec()?;

    let stream_labels =
        experiment::target_stream_labels(cfg, &targen.params, &classifier.params, seed)?;
    let target_trigram = experiment::label_trigram(cfg, &stream_labels)?;
    save_labels(&stream_labels, &out.join("target_stream_labels.txt"))?;

    let mut evals: Vec<(Checkpoint, WRunEvaluation)> = Vec::new();
    for path in checkpoints {
        let ck = load_checkpoint(path)?;
        let log = [vbp_core::train::EpochRecord {
            epoch: ck.epochs_trained,
            total: f64::NAN,
            l_z: f64::NAN,
            l_x: f64::NAN,
            mean_sigma: mean_sigma_probe(cfg, &ck, &targets, seed)?,
            clamp_warnings: 0,
            clipped_batches: 0,
        }];
        let eval = experiment::evaluate_trained(
            cfg,
            &targets,
            &target_trigram,
            &classifier.params,
            &ck.params,
            &log,
            ck.meta_prior_w,
            seed,
        )?;
        println!(
            "W = {}: ADS {:.1} (threshold {}), Tri-gram KL {:.4} (nat log), mean sigma {:.4}",
            eval.meta_prior_w,
            eval.divergence.ads,
            eval.divergence.threshold,
            eval.trigram_kl,
            eval.final_sigma
        );
        evals.push((ck, eval));
    }

    // Table-shaped CSV: metric rows x W columns
    let mut header: Vec<String> = vec!["metric".into()];
    for (_, e) in &evals {
        header.push(format!("W={}", e.meta_prior_w));
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut ads_row = vec!["ads".to_string()];
    let mut kl_row = vec!["trigram_kl".to_string()];
    for (_, e) in &evals {
        ads_row.push(format!("{:.2}", e.divergence.ads));
        kl_row.push(format!("{:.6}", e.trigram_kl));
    }
    write_csv(&out.join("table.csv"), &header_refs, &[ads_row, kl_row])?;

    // per-sequence detail + reverse KL + periodicity
    let mut detail = Vec::new();
    for (_, e) in &evals {
        let period = periodicity_score(
            &e.free_run_trajectory,
            (cfg.analysis.free_run_steps / 4).max(2).min(200),
        )
        .map(|p| format!("{}@{:.3}", p.peak_lag, p.peak_correlation))
        .unwrap_or_else(|_| "n/a".into());
        for (idx, step) in e.divergence.per_sequence.iter().enumerate() {
            detail.push(vec![
                e.meta_prior_w.to_string(),
                idx.to_string(),
                step.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
                format!("{:.6}", e.trigram_kl),
                format!("{:.6}", e.trigram_kl_reverse),
                period.clone(),
            ]);
        }
    }
    write_csv(
        &out.join("per_sequence.csv"),
        &[
            "W",
            "sequence",
            "divergence_step",
            "trigram_kl",
            "trigram_kl_reverse",
            "freerun_peak_lag@corr",
        ],
        &detail,
    )?;

    // plots: target vs regeneration (x and y panels) for sequence 0 of
    // each W, plus sigma traces of two second-layer units
    for (ck, e) in &evals {
        let regen = experiment::regenerate(
            &ck.params,
            &ck.spec,
            &codec,
            0,
            targets.raw()[0].step_count(),
            seed,
        )?;
        let tx: Vec<f64> = targets.raw()[0].points().iter().map(|p| p[0]).collect();
        let rx: Vec<f64> = regen.points().iter().map(|p| p[0]).collect();
        let ty: Vec<f64> = targets.raw()[0].points().iter().map(|p| p[1]).collect();
        let ry: Vec<f64> = regen.points().iter().map(|p| p[1]).collect();
        let svg = line_chart(
            &format!("target vs regeneration, W = {} (x top, y bottom shifted)", e.meta_prior_w),
            "step",
            "coordinate",
            &[
                Series { name: "target x", values: &tx, color: COLORS[0] },
                Series { name: "regen x", values: &rx, color: COLORS[1] },
                Series {
                    name: "target y+1",
                    values: &ty.iter().map(|v| v + 1.0).collect::<Vec<_>>(),
                    color: COLORS[2],
                },
                Series {
                    name: "regen y+1",
                    values: &ry.iter().map(|v| v + 1.0).collect::<Vec<_>>(),
                    color: COLORS[3],
                },
            ],
            Some((0.0, 2.0)),
        );
        std::fs::write(out.join(format!("regen_w{}.svg", e.meta_prior_w)), svg)?;

        // sigma traces of the first two units of the second layer
        let spec = &ck.spec;
        if spec.layer_count() > 1 {
            let mut rng = Stream::derive(seed, &[0x51]);
            let trace = forward_sequence(
                ForwardMode::OpenLoop(&targets.sequences()[0]),
                &ck.params.init_latents[0],
                &ck.params,
                spec,
                &mut rng,
                None,
            )
            .map_err(|e| anyhow!("sigma trace: {}", e))?;
            let range = spec.layer_range(1);
            let units: Vec<usize> = range.take(2).collect();
            let stats = sigma_statistics(&trace, &units)
                .map_err(|e| anyhow!("sigma stats: {}", e))?;
            let names: Vec<String> = stats.units.iter().map(|u| format!("unit {}", u)).collect();
            let series: Vec<Series> = stats
                .series
                .iter()
                .zip(names.iter())
                .enumerate()
                .map(|(k, (values, name))| Series {
                    name,
                    values,
                    color: COLORS[k % COLORS.len()],
                })
                .collect();
            let svg = line_chart(
                &format!("sigma of two second-layer units, W = {}", e.meta_prior_w),
                "step",
                "sigma",
                &series,
                None,
            );
            std::fs::write(out.join(format!("sigma_w{}.svg", e.meta_prior_w)), svg)?;
        }
    }

    println!(
        "table.csv, per_sequence.csv, and plots written to {} (KL in nats)",
        out.display()
    );
    Ok(())
}

/// Mean sigma of an open-loop pass over the first target sequence.
fn mean_sigma_probe(
    cfg: &RunConfig,
    ck: &Checkpoint,
    targets: &vbp_core::seqdata::Dataset,
    seed: u64,
) -> Result<f64> {
    let _ = cfg;
    let mut rng = Stream::derive(seed, &[0x516]);
    let trace = forward_sequence(
        ForwardMode::OpenLoop(&targets.sequences()[0]),
        &ck.params.init_latents[0],
        &ck.params,
        &ck.spec,
        &mut rng,
        None,
    )
    .map_err(|e| anyhow!("sigma probe: {}", e))?;
    Ok(trace.mean_sigma())
}

/// `gradcheck`: compare analytic gradients against finite differences in
/// both sigma configurations.
pub fn cmd_gradcheck(seed: u64, tolerance: f64, out: Option<&Path>) -> Result<()> {
    let spec = vbp_core::net::NetworkSpec::new(vec![3, 2], vec![2.0, 4.0], 4, 4)
        .map_err(|e| anyhow!("spec: {}", e))?;
    let mut rows = Vec::new();
    let mut all_passed = true;
    for (name, sigma_bias, tol) in [
        ("stochastic", None, tolerance),
        ("deterministic-sigma", Some(-40.0), tolerance.min(1e-6)),
    ] {
        let opts = GradCheckOptions {
            sigma_bias,
            ..GradCheckOptions::default()
        };
        let report = gradient_check_with(&spec, seed, tol, &opts)
            .map_err(|e| anyhow!("gradient check: {}", e))?;
        println!(
            "{}: worst relative error {:.3e} (tolerance {:.0e}) -> {}",
            name,
            report.worst,
            report.tolerance,
            if report.passed { "PASS" } else { "FAIL" }
        );
        for b in &report.blocks {
            println!("  {:<14} max {:.3e} over {} coords", b.name, b.max_rel_err, b.coords);
            rows.push(vec![
                name.to_string(),
                b.name.to_string(),
                format!("{:.3e}", b.max_rel_err),
                b.coords.to_string(),
            ]);
        }
        all_passed &= report.passed;
    }
    if let Some(dir) = out {
        ensure_out(dir)?;
        write_csv(
            &dir.join("gradcheck.csv"),
            &["configuration", "block", "max_rel_err", "coords"],
            &rows,
        )?;
    }
    if !all_passed {
        bail!("gradient check failed");
    }
    Ok(())
}
