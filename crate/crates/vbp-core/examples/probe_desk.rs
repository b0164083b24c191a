//! End-to-end desk-scale probe: render -> targen -> generate -> VBP sweep.

use std::time::Instant;
use vbp_core::analysis::{average_divergence_step, divergence_step};
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec};
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{decode_frame, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{train, AdamConfig, NoHooks, TrainingConfig};

fn main() {
    let t_all = Instant::now();
    let codec = GridCodec::new(9, 9, 250.0).unwrap();
    let m = codec.dim();

    // 1. rendered surrogate-human data: 30 prototype emissions
    let fsm = default_pfsm();
    let mut rng = Stream::new(42);
    let labels = sample_labels(&fsm, 30, &mut rng).unwrap();
    let n_abc = labels.chunks(3).filter(|t| t[2] == Label::C).count();
    println!("rendered labels: {} triplets, {} ABC", labels.len() / 3, n_abc);
    let shapes = default_shapes(0.15, 0.15).unwrap();
    let (traj, step_labels) = render_labels_detailed(&labels, &shapes, 20, &mut rng).unwrap();
    println!("rendered {} steps", traj.step_count());

    // split into training sequences of ~300 steps
    let chunk = 300;
    let mut raw = Vec::new();
    let pts = traj.points();
    let mut i = 0;
    while i + chunk <= pts.len() {
        raw.push(Trajectory2D::new(pts[i..i + chunk].to_vec()).unwrap());
        i += chunk;
    }
    println!("targen training sequences: {}", raw.len());
    let rendered = Dataset::from_trajectories(
        raw,
        codec,
        DatasetMeta { seed: 42, provenance: "render".into() },
    )
    .unwrap();

    // 2. target generator
    let targen_spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 32.0], m, m).unwrap();
    let targen_cfg = TrainingConfig {
        meta_prior_w: 0.0,
        epochs: 1500,
        batch_size: rendered.len().min(8),
        adam: AdamConfig { alpha: 0.02, ..AdamConfig::default() },
        seed: 1,
        gradient_clip: None,
    };
    let t0 = Instant::now();
    let (targen, tlog) = build_target_generator(&rendered, &targen_spec, &targen_cfg, &mut NoHooks).unwrap();
    println!(
        "targen: {} epochs in {:.1?}, l_x/T {:.4}, sigma {:.4}",
        targen_cfg.epochs,
        t0.elapsed(),
        tlog.last().unwrap().l_x / chunk as f64,
        tlog.last().unwrap().mean_sigma
    );

    // closed-loop regen quality on sequence 0
    for idx in 0..rendered.len().min(3) {
        let mut nrng = Stream::new(900 + idx as u64);
        let trace = forward_sequence(
            ForwardMode::ClosedLoop { steps: chunk },
            &targen.init_latents[idx],
            &targen,
            &targen_spec,
            &mut nrng,
            None,
        )
        .unwrap();
        let regen: Vec<[f64; 2]> = trace.outputs.iter().map(|f| decode_frame(f, &codec).unwrap()).collect();
        let regen = Trajectory2D::new(regen).unwrap();
        let target = &rendered.raw()[idx];
        let good = target
            .points()
            .iter()
            .zip(regen.points())
            .filter(|(a, b)| {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                (dx * dx + dy * dy) / 2.0 <= 0.025
            })
            .count();
        println!("  regen seq {}: {}/{} steps under threshold, div at {:?}", idx, good, chunk, divergence_step(target, &regen, 0.025).unwrap());
    }

    // 3. generate fluctuated targets: 8 slices of 400
    let gen_opts = TargetGenOptions {
        total_steps: 8000,
        noise_sigma: 0.1,
        sample_start: 4000,
        slice_length: 400,
        slice_count: 8,
        init_index: 0,
        seed: 5,
    };
    let t0 = Instant::now();
    let targets = generate_targets(&targen, &targen_spec, &codec, &gen_opts).unwrap();
    println!("generated {} target sequences in {:.1?}", targets.len(), t0.elapsed());

    // 4. VBP sweep at desk scale
    let vbp_spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 32.0], m, m).unwrap();
    for w in [0.0, 0.01, 0.1, 0.2] {
        let cfg = TrainingConfig {
            meta_prior_w: w,
            epochs: 1500,
            batch_size: 8,
            adam: AdamConfig { alpha: 0.02, ..AdamConfig::default() },
            seed: 11,
            gradient_clip: None,
        };
        let t0 = Instant::now();
        let (vbp, vlog) = train(&targets, &vbp_spec, &cfg, &mut NoHooks).unwrap();
        let last = vlog.last().unwrap();
        // closed-loop regen of each training sequence
        let mut pairs_regen = Vec::new();
        for idx in 0..targets.len() {
            let mut nrng = Stream::new(7000 + idx as u64);
            let trace = forward_sequence(
                ForwardMode::ClosedLoop { steps: 400 },
                &vbp.init_latents[idx],
                &vbp,
                &vbp_spec,
                &mut nrng,
                None,
            )
            .unwrap();
            let regen: Vec<[f64; 2]> = trace.outputs.iter().map(|f| decode_frame(f, &codec).unwrap()).collect();
            pairs_regen.push(Trajectory2D::new(regen).unwrap());
        }
        let pairs: Vec<(&Trajectory2D, &Trajectory2D)> = targets
            .raw()
            .iter()
            .zip(pairs_regen.iter())
            .collect();
        let report = average_divergence_step(&pairs, 0.025).unwrap();
        let full = report.per_sequence.iter().filter(|s| s.is_none()).count();
        println!(
            "W = {:<5} {:.1?}: l_x/T {:.4} sigma {:.4} ADS {:.1} full {}/8 divs {:?}",
            w,
            t0.elapsed(),
            last.l_x / 400.0,
            last.mean_sigma,
            report.ads,
            full,
            report.per_sequence
        );
    }
    println!("total {:.1?}", t_all.elapsed());
}
