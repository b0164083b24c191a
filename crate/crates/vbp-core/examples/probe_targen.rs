//! Tar-Gen closed-loop stability vs training-data tremor.

use std::time::Instant;
use vbp_core::analysis::divergence_step;
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec};
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{decode_frame, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

fn main() {
    for (tremor, sharp, epochs) in [
        (0.008f64, 250.0f64, 4000usize),
        (0.015, 250.0, 4000),
        (0.008, 150.0, 4000),
    ] {
        let codec = GridCodec::new(9, 9, sharp).unwrap();
        let m = codec.dim();
        let fsm = default_pfsm();
        let mut rng = Stream::new(42);
        let labels = sample_labels(&fsm, 30, &mut rng).unwrap();
        let shapes = default_shapes_with_tremor(0.10, 0.10, tremor).unwrap();
        let (traj, _) = render_labels_detailed(&labels, &shapes, 20, &mut rng).unwrap();

        let chunk = 300;
        let mut raw = Vec::new();
        let pts = traj.points();
        let mut i = 0;
        while i + chunk <= pts.len() {
            raw.push(Trajectory2D::new(pts[i..i + chunk].to_vec()).unwrap());
            i += chunk;
        }
        let rendered = Dataset::from_trajectories(
            raw, codec,
            DatasetMeta { seed: 42, provenance: "render".into() },
        ).unwrap();

        // entropy floor of the encoded targets
        let floor: f64 = rendered.sequences()[0]
            .frames()
            .iter()
            .map(|f| f.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
            .sum::<f64>()
            / chunk as f64;

        let spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 32.0], m, m).unwrap();
        let cfg = TrainingConfig {
            meta_prior_w: 0.0,
            epochs,
            batch_size: rendered.len().min(8),
            adam: AdamConfig { alpha: 0.02, ..AdamConfig::default() },
            seed: 1,
            gradient_clip: None,
        };
        let t0 = Instant::now();
        let (targen, tlog) = build_target_generator(&rendered, &spec, &cfg, &mut NoHooks).unwrap();
        let last = tlog.last().unwrap();
        print!(
            "tremor {} sharp {} ep {}: {:.0?} gap/T {:.4} sig {:.4} | div:",
            tremor, sharp, epochs, t0.elapsed(),
            last.l_x / chunk as f64 - floor, last.mean_sigma
        );
        for idx in 0..rendered.len() {
            let mut nrng = Stream::new(900 + idx as u64);
            let trace = forward_sequence(
                ForwardMode::ClosedLoop { steps: chunk },
                &targen.init_latents[idx], &targen, &spec, &mut nrng, None,
            ).unwrap();
            let regen: Vec<[f64; 2]> = trace.outputs.iter().map(|f| decode_frame(f, &codec).unwrap()).collect();
            let regen = Trajectory2D::new(regen).unwrap();
            print!(" {:?}", divergence_step(&rendered.raw()[idx], &regen, 0.025).unwrap());
        }
        // noisy free-run spread
        let mut nrng = Stream::new(5);
        let trace = forward_sequence(
            ForwardMode::ClosedLoop { steps: 4000 },
            &targen.init_latents[0], &targen, &spec, &mut nrng, Some(0.1),
        ).unwrap();
        let tail: Vec<[f64; 2]> = trace.outputs[2000..].iter().map(|f| decode_frame(f, &codec).unwrap()).collect();
        let mut speed = 0.0;
        for w in tail.windows(2) {
            speed += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (1.0f64, 0.0f64, 1.0f64, 0.0f64);
        for p in &tail {
            xmin = xmin.min(p[0]); xmax = xmax.max(p[0]);
            ymin = ymin.min(p[1]); ymax = ymax.max(p[1]);
        }
        println!(
            " | free: bbox [{:.2},{:.2}]x[{:.2},{:.2}] speed {:.4}",
            xmin, xmax, ymin, ymax, speed / 2000.0
        );
    }
}
