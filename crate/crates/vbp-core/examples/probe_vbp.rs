//! Replay fidelity vs depth and capacity at tau = [2, 8, 128].

use std::time::Instant;
use vbp_core::analysis::average_divergence_step;
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec};
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{decode_frame, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

fn decode_traj(outputs: &[Vec<f64>], codec: &GridCodec) -> Trajectory2D {
    Trajectory2D::new(outputs.iter().map(|f| decode_frame(f, codec).unwrap()).collect()).unwrap()
}

fn main() {
    let codec = GridCodec::new(9, 9, 250.0).unwrap();
    let m = codec.dim();
    let fsm = default_pfsm();
    let mut rng = Stream::new(42);
    let labels = sample_labels(&fsm, 30, &mut rng).unwrap();
    let shapes = default_shapes_with_tremor(0.10, 0.10, 0.008).unwrap();
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
        raw, codec, DatasetMeta { seed: 42, provenance: "r".into() },
    ).unwrap();
    let spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 32.0], m, m).unwrap();
    let cfg0 = TrainingConfig {
        meta_prior_w: 0.0, epochs: 4000, batch_size: rendered.len().min(8),
        adam: AdamConfig { alpha: 0.02, ..AdamConfig::default() }, seed: 1, gradient_clip: None,
    };
    let (targen, _) = build_target_generator(&rendered, &spec, &cfg0, &mut NoHooks).unwrap();
    let opts = TargetGenOptions {
        total_steps: 8000, noise_sigma: 0.1, sample_start: 4000,
        slice_length: 400, slice_count: 8, init_index: 0, seed: 5,
    };
    let targets = generate_targets(&targen, &spec, &codec, &opts).unwrap();
    eprintln!("targets ready");

    for (layers, epochs, alpha) in [
        (vec![30usize, 10, 5], 16000usize, 0.01f64),
        (vec![40, 14, 8], 16000, 0.01),
    ] {
        let spec_v = NetworkSpec::new(layers.clone(), vec![2.0, 8.0, 128.0], m, m).unwrap();
        let cfg = TrainingConfig {
            meta_prior_w: 0.0, epochs, batch_size: 8,
            adam: AdamConfig { alpha, ..AdamConfig::default() }, seed: 11,
            gradient_clip: Some(5.0),
        };
        let t0 = Instant::now();
        let (vbp, vlog) = vbp_core::train::train(&targets, &spec_v, &cfg, &mut NoHooks).unwrap();
        let mut regens = Vec::new();
        for idx in 0..targets.len() {
            let mut nrng = Stream::new(7000 + idx as u64);
            let tr = forward_sequence(
                ForwardMode::ClosedLoop { steps: 400 }, &vbp.init_latents[idx], &vbp, &spec_v, &mut nrng, None,
            ).unwrap();
            regens.push(decode_traj(&tr.outputs, &codec));
        }
        let pairs: Vec<(&Trajectory2D, &Trajectory2D)> = targets.raw().iter().zip(regens.iter()).collect();
        let rep = average_divergence_step(&pairs, 0.025).unwrap();
        println!(
            "{:?} ep {} a {}: {:.0?} l_x/T {:.4} sig {:.5} ADS {:.1} full {}/8 divs {:?}",
            layers, epochs, alpha, t0.elapsed(), vlog.last().unwrap().l_x / 400.0,
            vlog.last().unwrap().mean_sigma,
            rep.ads, rep.per_sequence.iter().filter(|s| s.is_none()).count(), rep.per_sequence
        );
    }
}
