//! Can the model replay a single noisy slice closed-loop at all?

use vbp_core::analysis::divergence_step;
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec};
use vbp_core::pipeline::*;
use vbp_core::rng::{Stream, ZeroNoise};
use vbp_core::seqdata::{decode_frame, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

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
        slice_length: 400, slice_count: 1, init_index: 0, seed: 5,
    };
    let one = generate_targets(&targen, &spec, &codec, &opts).unwrap();

    for (epochs, alpha, taus) in [
        (10000usize, 0.005f64, vec![2.0f64, 8.0, 32.0]),
        (10000, 0.005, vec![2.0, 8.0, 96.0]),
    ] {
        let spec_v = NetworkSpec::new(vec![30, 10, 5], taus.clone(), m, m).unwrap();
        let cfg = TrainingConfig {
            meta_prior_w: 0.0, epochs, batch_size: 1,
            adam: AdamConfig { alpha, ..AdamConfig::default() }, seed: 11,
            gradient_clip: Some(5.0),
        };
        let t0 = std::time::Instant::now();
        let (vbp, vlog) = vbp_core::train::train(&one, &spec_v, &cfg, &mut NoHooks).unwrap();
        let tr = forward_sequence(
            ForwardMode::ClosedLoop { steps: 400 }, &vbp.init_latents[0], &vbp, &spec_v, &mut ZeroNoise, None,
        ).unwrap();
        let regen = Trajectory2D::new(tr.outputs.iter().map(|f| decode_frame(f, &codec).unwrap()).collect()).unwrap();
        let div = divergence_step(&one.raw()[0], &regen, 0.025).unwrap();
        // how many steps total stay under threshold
        let good = one.raw()[0].points().iter().zip(regen.points()).filter(|(a, b)| {
            let dx = a[0] - b[0]; let dy = a[1] - b[1];
            (dx * dx + dy * dy) / 2.0 <= 0.025
        }).count();
        println!(
            "taus {:?} ep {} a {}: {:.0?} l_x/T {:.4} sig {:.5} div {:?} good {}/400",
            taus, epochs, alpha, t0.elapsed(),
            vlog.last().unwrap().l_x / 400.0, vlog.last().unwrap().mean_sigma, div, good
        );
    }
}
