//! Acceptance-fixture dry run: one seed, four W values, tuned desk settings.

use std::time::Instant;
use vbp_core::analysis::{average_divergence_step, ngram_distribution, ngram_kl};
use vbp_core::net::{forward_sequence, ForwardMode, NetworkSpec};
use vbp_core::pipeline::*;
use vbp_core::rng::Stream;
use vbp_core::seqdata::{decode_frame, encode_trajectory, Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{AdamConfig, NoHooks, TrainingConfig};

fn decode_traj(outputs: &[Vec<f64>], codec: &GridCodec) -> Trajectory2D {
    Trajectory2D::new(outputs.iter().map(|f| decode_frame(f, codec).unwrap()).collect()).unwrap()
}

fn main() {
    let noise: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let t_all = Instant::now();
    let codec = GridCodec::new(9, 9, 250.0).unwrap();
    let m = codec.dim();
    let fsm = default_pfsm();
    let mut rng = Stream::new(42);
    let labels = sample_labels(&fsm, 45, &mut rng).unwrap();
    let n_abc = labels.chunks(3).filter(|t| t[2] == Label::C).count();
    let shapes = default_shapes_with_tremor(0.08, 0.08, 0.012).unwrap();
    let (traj, step_labels) = render_labels_detailed(&labels, &shapes, 20, &mut rng).unwrap();
    println!("rendered {} steps, {}/15 ABC", traj.step_count(), n_abc);

    let chunk = 300;
    let seg = SegmentationConfig::for_nominal(60);
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
    println!("{} targen chunks", rendered.len());

    let spec = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 96.0], m, m).unwrap();
    let cfg0 = TrainingConfig {
        meta_prior_w: 0.0, epochs: 6000, batch_size: 8,
        adam: AdamConfig { alpha: 0.005, ..AdamConfig::default() }, seed: 1, gradient_clip: Some(5.0),
    };
    let t0 = Instant::now();
    let (targen, tlog) = build_target_generator(&rendered, &spec, &cfg0, &mut NoHooks).unwrap();
    println!("targen {:.0?} sigma {:.4}", t0.elapsed(), tlog.last().unwrap().mean_sigma);

    let opts = TargetGenOptions {
        total_steps: 8000, noise_sigma: noise, sample_start: 4000,
        slice_length: 400, slice_count: 8, init_index: 0, seed: 5,
    };
    let targets = generate_targets(&targen, &spec, &codec, &opts).unwrap();

    // classifier with clean-render mix
    let mut crng = Stream::new(43);
    let clean_labels = sample_labels(&fsm, 15, &mut crng).unwrap();
    let clean_shapes = default_shapes(0.0, 0.0).unwrap();
    let (ctraj, csteps) = render_labels_detailed(&clean_labels, &clean_shapes, 20, &mut crng).unwrap();
    let cpts = ctraj.points();
    let cper = csteps.per_step();
    let mut i = 0;
    while i + chunk <= cpts.len() {
        let t = Trajectory2D::new(cpts[i..i + chunk].to_vec()).unwrap();
        inputs.push(encode_trajectory(&t, &codec).unwrap());
        let slice = cper[i..i + chunk].to_vec();
        labs.push(LabelSequence::new(slice.clone(), compress_step_labels(&slice, &seg)));
        i += chunk;
    }
    let cls_spec = NetworkSpec::new(vec![20, 10], vec![2.0, 8.0], m, 3).unwrap();
    let cls_cfg = TrainingConfig {
        meta_prior_w: 0.0, epochs: 4000, batch_size: 8,
        adam: AdamConfig { alpha: 0.005, ..AdamConfig::default() }, seed: 3, gradient_clip: Some(5.0),
    };
    let t0 = Instant::now();
    let (clf, _) = build_classifier(&inputs, &labs, &cls_spec, &cls_cfg, &mut NoHooks).unwrap();
    println!("classifier {:.0?}", t0.elapsed());

    // reference stream
    let mut srng = Stream::new(77);
    let stream = forward_sequence(
        ForwardMode::ClosedLoop { steps: 2000 }, &targen.init_latents[0], &targen, &spec, &mut srng, Some(noise),
    ).unwrap();
    let sseq = vbp_core::seqdata::EncodedSequence::new(stream.outputs.clone()).unwrap();
    let slab = classify(&clf, &cls_spec, &sseq, &seg).unwrap();
    println!("stream [{}]", slab.compressed_string());
    let p_target = ngram_distribution(slab.compressed(), 3, 1e-6).unwrap();

    for w in [0.0, 0.01, 0.1, 0.2] {
        let cfg = TrainingConfig {
            meta_prior_w: w, epochs: 6000, batch_size: 8,
            adam: AdamConfig { alpha: 0.01, ..AdamConfig::default() }, seed: 11, gradient_clip: Some(5.0),
        };
        let t0 = Instant::now();
        let spec_v = NetworkSpec::new(vec![30, 10, 5], vec![2.0, 8.0, 128.0], m, m).unwrap();
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
        let mut frng = Stream::new(555);
        let fr = forward_sequence(
            ForwardMode::ClosedLoop { steps: 2000 }, &vbp.init_latents[0], &vbp, &spec_v, &mut frng, None,
        ).unwrap();
        let fseq = vbp_core::seqdata::EncodedSequence::new(fr.outputs.clone()).unwrap();
        let flab = classify(&clf, &cls_spec, &fseq, &seg).unwrap();
        let kl = ngram_distribution(flab.compressed(), 3, 1e-6)
            .map(|q| ngram_kl(&p_target, &q).unwrap())
            .unwrap_or(f64::INFINITY);
        println!(
            "W {:<4} {:.0?}: l_x/T {:.4} sig {:.4} ADS {:.1} full {}/8 KL {:.4} divs {:?} fr [{}]",
            w, t0.elapsed(), vlog.last().unwrap().l_x / 400.0, vlog.last().unwrap().mean_sigma,
            rep.ads, rep.per_sequence.iter().filter(|s| s.is_none()).count(), kl,
            rep.per_sequence, flab.compressed_string()
        );
    }
    println!("total {:.0?}", t_all.elapsed());
}
