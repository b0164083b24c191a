//! Classifier accuracy with recognition-aligned labels and mixed training.

use vbp_core::net::NetworkSpec;
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{encode_trajectory, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

fn chunks(
    traj: &Trajectory2D,
    labels: &LabelSequence,
    chunk: usize,
    codec: &GridCodec,
    seg: &SegmentationConfig,
) -> (Vec<vbp_core::seqdata::EncodedSequence>, Vec<LabelSequence>) {
    let pts = traj.points();
    let per = labels.per_step();
    let mut seqs = Vec::new();
    let mut labs = Vec::new();
    let mut i = 0;
    while i + chunk <= pts.len() {
        let t = Trajectory2D::new(pts[i..i + chunk].to_vec()).unwrap();
        seqs.push(encode_trajectory(&t, codec).unwrap());
        let s = per[i..i + chunk].to_vec();
        let c = compress_step_labels(&s, seg);
        labs.push(LabelSequence::new(s, c));
        i += chunk;
    }
    (seqs, labs)
}

fn main() {
    let codec = GridCodec::new(9, 9, 250.0).unwrap();
    let m = codec.dim();
    let seg = SegmentationConfig::for_nominal(60);
    let fsm = default_pfsm();

    // jittered rendering + one clean rendering with a different label draw
    let mut rng = Stream::new(42);
    let labels_a = sample_labels(&fsm, 30, &mut rng).unwrap();
    let shapes_j = default_shapes_with_tremor(0.10, 0.10, 0.008).unwrap();
    let (traj_a, steps_a) = render_labels_detailed(&labels_a, &shapes_j, 20, &mut rng).unwrap();

    let mut rng_b = Stream::new(43);
    let labels_b = sample_labels(&fsm, 12, &mut rng_b).unwrap();
    let shapes_c = default_shapes(0.0, 0.0).unwrap();
    let (traj_b, steps_b) = render_labels_detailed(&labels_b, &shapes_c, 20, &mut rng_b).unwrap();

    let (mut seqs, mut labs) = chunks(&traj_a, &steps_a, 300, &codec, &seg);
    let (seq_b, lab_b) = chunks(&traj_b, &steps_b, 300, &codec, &seg);
    seqs.extend(seq_b);
    labs.extend(lab_b);
    println!("training sequences: {}", seqs.len());

    // held-out clean rendering, another label draw
    let mut hrng = Stream::new(777);
    let hold_labels = [Label::A, Label::B, Label::B, Label::A, Label::B, Label::C];
    let (htraj, hstep) = render_labels_detailed(&hold_labels, &shapes_c, 20, &mut hrng).unwrap();
    let hseq = encode_trajectory(&htraj, &codec).unwrap();

    for (layers, epochs, alpha, clip) in [
        (vec![20usize, 10], 4000usize, 0.005f64, None),
        (vec![30, 10], 6000, 0.01, Some(5.0)),
    ] {
        let spec = NetworkSpec::new(layers.clone(), vec![2.0, 8.0], m, 3).unwrap();
        let cfg = TrainingConfig {
            meta_prior_w: 0.0, epochs, batch_size: seqs.len().min(8),
            adam: AdamConfig { alpha, ..AdamConfig::default() }, seed: 3, gradient_clip: clip,
        };
        let t0 = std::time::Instant::now();
        let (clf, log) = build_classifier(&seqs, &labs, &spec, &cfg, &mut NoHooks).unwrap();
        let hgot = classify(&clf, &spec, &hseq, &seg).unwrap();
        let hacc = hgot.per_step().iter().zip(hstep.per_step()).filter(|(a, b)| a == b).count() as f64
            / hstep.per_step().len() as f64;
        let tgot = classify(&clf, &spec, &seqs[0], &seg).unwrap();
        let tacc = tgot.per_step().iter().zip(labs[0].per_step()).filter(|(a, b)| a == b).count() as f64
            / labs[0].per_step().len() as f64;
        println!(
            "{:?} ep {} a {} clip {:?}: {:.0?} sigma {:.3} train {:.3} holdout {:.4} [{}] vs [{}]",
            layers, epochs, alpha, clip, t0.elapsed(), log.last().unwrap().mean_sigma,
            tacc, hacc, hgot.compressed_string(),
            hold_labels.iter().map(|l| l.as_char()).collect::<String>()
        );
    }
}
