//! Inspect classified label streams of synthesized targets.

use vbp_core::net::NetworkSpec;
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{encode_trajectory, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

fn main() {
    let codec = GridCodec::new(9, 9, 250.0).unwrap();
    let m = codec.dim();
    let fsm = default_pfsm();
    let mut rng = Stream::new(42);
    let labels = sample_labels(&fsm, 30, &mut rng).unwrap();
    let shapes = default_shapes_with_tremor(0.10, 0.10, 0.008).unwrap();
    let (traj, step_labels) = render_labels_detailed(&labels, &shapes, 20, &mut rng).unwrap();
    let seg = SegmentationConfig::for_nominal(60);
    let chunk = 300;
    let pts = traj.points();
    let per = step_labels.per_step();
    let (mut raws, mut inputs, mut labs) = (Vec::new(), Vec::new(), Vec::new());
    let mut i = 0;
    while i + chunk <= pts.len() {
        let t = Trajectory2D::new(pts[i..i + chunk].to_vec()).unwrap();
        inputs.push(encode_trajectory(&t, &codec).unwrap());
        raws.push(t);
        let slice = per[i..i + chunk].to_vec();
        let comp = compress_step_labels(&slice, &seg);
        labs.push(LabelSequence::new(slice, comp));
        i += chunk;
    }
    let rendered = Dataset::from_trajectories(
        raws, codec, DatasetMeta { seed: 42, provenance: "r".into() },
    ).unwrap();
    let spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 96.0], m, m).unwrap();
    let cfg = TrainingConfig {
        meta_prior_w: 0.0, epochs: 4000, batch_size: rendered.len().min(8),
        adam: AdamConfig { alpha: 0.01, ..AdamConfig::default() }, seed: 1, gradient_clip: Some(5.0),
    };
    let (targen, _) = build_target_generator(&rendered, &spec, &cfg, &mut NoHooks).unwrap();

    let mut crng = Stream::new(43);
    let clean_labels = sample_labels(&fsm, 12, &mut crng).unwrap();
    let clean_shapes = default_shapes(0.0, 0.0).unwrap();
    let (ctraj, csteps) = render_labels_detailed(&clean_labels, &clean_shapes, 20, &mut crng).unwrap();
    let cpts = ctraj.points();
    let cper = csteps.per_step();
    let mut i = 0;
    while i + chunk <= cpts.len() {
        let t = Trajectory2D::new(cpts[i..i + chunk].to_vec()).unwrap();
        inputs.push(encode_trajectory(&t, &codec).unwrap());
        let slice = cper[i..i + chunk].to_vec();
        let comp = compress_step_labels(&slice, &seg);
        labs.push(LabelSequence::new(slice, comp));
        i += chunk;
    }
    let cls_spec = NetworkSpec::new(vec![20, 10], vec![2.0, 8.0], m, 3).unwrap();
    let cls_cfg = TrainingConfig {
        meta_prior_w: 0.0, epochs: 4000, batch_size: inputs.len().min(8),
        adam: AdamConfig { alpha: 0.005, ..AdamConfig::default() }, seed: 3, gradient_clip: Some(5.0),
    };
    let (clf, _) = build_classifier(&inputs, &labs, &cls_spec, &cls_cfg, &mut NoHooks).unwrap();

    // one long classified stream, no slicing
    let opts = TargetGenOptions {
        total_steps: 12000, noise_sigma: 0.1, sample_start: 2000,
        slice_length: 10000, slice_count: 1, init_index: 0, seed: 5,
    };
    let long = generate_targets(&targen, &spec, &codec, &opts).unwrap();
    let seq = &long.sequences()[0];
    let got = classify(&clf, &cls_spec, seq, &seg).unwrap();
    let s = got.compressed_string();
    println!("long stream ({} emissions): {}", s.len(), s);
    let mut abb = 0; let mut abc = 0; let mut aba = 0;
    for w in got.compressed().windows(3) {
        if w[0] == Label::A && w[1] == Label::B {
            match w[2] { Label::B => abb += 1, Label::C => abc += 1, Label::A => aba += 1 }
        }
    }
    println!("ABB {} ABC {} ABA {} -> C freq {:.3}", abb, abc, aba, abc as f64 / (abb + abc).max(1) as f64);
    // run-length histogram of per-step labels
    let mut runs: Vec<(char, usize)> = Vec::new();
    for &l in got.per_step() {
        match runs.last_mut() {
            Some((c, n)) if *c == l.as_char() => *n += 1,
            _ => runs.push((l.as_char(), 1)),
        }
    }
    let short = runs.iter().filter(|(_, n)| *n < 15).count();
    println!("step-label runs: {} total, {} shorter than 15", runs.len(), short);
    let preview: String = runs.iter().take(40).map(|(c, n)| format!("{}{} ", c, n)).collect();
    println!("first runs: {}", preview);
}
