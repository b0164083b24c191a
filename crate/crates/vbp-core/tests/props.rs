//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use vbp_core::analysis::{divergence_step, ngram_distribution, ngram_kl};
use vbp_core::net::{
    forward_sequence, init_parameters, kl_term, reconstruction_term, ForwardMode, NetworkSpec,
};
use vbp_core::pipeline::{compress_step_labels, Label, SegmentationConfig};
use vbp_core::rng::Stream;
use vbp_core::seqdata::{
    decode_frame, encode_point, encode_trajectory, GridCodec, Trajectory2D,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn codec_round_trip_stays_within_half_pitch(
        x in 0.05f64..0.95,
        y in 0.05f64..0.95,
        rows in 5usize..=13,
        cols in 5usize..=13,
        sharpness in 100f64..400.0,
    ) {
        let codec = GridCodec::new(rows, cols, sharpness).unwrap();
        let frame = encode_point([x, y], &codec).unwrap();
        let p = decode_frame(&frame, &codec).unwrap();
        prop_assert!((p[0] - x).abs() <= codec.half_pitch());
        prop_assert!((p[1] - y).abs() <= codec.half_pitch());
    }

    #[test]
    fn encoded_frames_are_distributions(
        x in 0f64..=1.0,
        y in 0f64..=1.0,
        sharpness in 1f64..500.0,
    ) {
        let codec = GridCodec::new(11, 11, sharpness).unwrap();
        let frame = encode_point([x, y], &codec).unwrap();
        let sum: f64 = frame.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(frame.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn lower_bound_terms_are_nonpositive(seed in 0u64..5000) {
        let spec = NetworkSpec::new(vec![4, 2], vec![2.0, 8.0], 6, 6).unwrap();
        let params = init_parameters(&spec, 1, seed).unwrap();
        let codec = GridCodec::new(2, 3, 40.0).unwrap();
        let mut rng = Stream::derive(seed, &[1]);
        let points: Vec<[f64; 2]> = (0..15)
            .map(|_| [rng.next_f64(), rng.next_f64()])
            .collect();
        let seq = encode_trajectory(&Trajectory2D::new(points).unwrap(), &codec).unwrap();
        let trace = forward_sequence(
            ForwardMode::OpenLoop(&seq),
            &params.init_latents[0],
            &params,
            &spec,
            &mut rng,
            None,
        )
        .unwrap();
        prop_assert!(kl_term(&trace).unwrap() <= 0.0);
        prop_assert!(reconstruction_term(&trace, &seq).unwrap() <= 0.0);
    }

    #[test]
    fn ngram_kl_is_nonnegative_and_zero_on_self(seed in 0u64..5000) {
        let mut rng = Stream::new(seed);
        let draw = |rng: &mut Stream| -> Vec<Label> {
            (0..80)
                .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
                .collect()
        };
        let p = ngram_distribution(&draw(&mut rng), 3, 1e-6).unwrap();
        let q = ngram_distribution(&draw(&mut rng), 3, 1e-6).unwrap();
        prop_assert!(ngram_kl(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(ngram_kl(&p, &p).unwrap(), 0.0);
        let sum: f64 = p.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn divergence_step_is_monotone_in_threshold(seed in 0u64..5000) {
        let mut rng = Stream::new(seed);
        let n = 50;
        let a: Vec<[f64; 2]> = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
        let b: Vec<[f64; 2]> = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
        let ta = Trajectory2D::new(a).unwrap();
        let tb = Trajectory2D::new(b).unwrap();
        let mut prev = 0usize;
        for thr in [0.001, 0.01, 0.05, 0.2, 0.9] {
            let step = divergence_step(&ta, &tb, thr)
                .unwrap()
                .unwrap_or(usize::MAX);
            prop_assert!(step >= prev);
            prev = step;
        }
    }

    #[test]
    fn compression_emits_no_empty_runs_and_respects_min_run(
        seed in 0u64..5000,
        min_run in 1usize..8,
        nominal in 8usize..30,
    ) {
        let mut rng = Stream::new(seed);
        let per_step: Vec<Label> = (0..200)
            .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
            .collect();
        let seg = SegmentationConfig { min_run, nominal_run: nominal };
        let compressed = compress_step_labels(&per_step, &seg);
        // adjacent symbols may repeat (split emissions), but every emission
        // came from a run of at least min_run steps
        let kept_steps: usize = {
            let mut runs: Vec<(Label, usize)> = Vec::new();
            for &l in &per_step {
                match runs.last_mut() {
                    Some((label, len)) if *label == l => *len += 1,
                    _ => runs.push((l, 1)),
                }
            }
            runs.iter().filter(|(_, len)| *len >= min_run).map(|(_, l)| l).sum()
        };
        if kept_steps == 0 {
            prop_assert!(compressed.is_empty());
        } else {
            prop_assert!(!compressed.is_empty());
            prop_assert!(compressed.len() <= kept_steps / min_run.min(nominal) + per_step.len() / nominal + 1);
        }
    }

    #[test]
    fn forward_is_reproducible_for_fixed_seed(seed in 0u64..2000) {
        let spec = NetworkSpec::new(vec![3, 2], vec![2.0, 4.0], 4, 4).unwrap();
        let params = init_parameters(&spec, 1, seed).unwrap();
        let seq = vbp_core::seqdata::EncodedSequence::new(vec![vec![0.25; 4]; 10]).unwrap();
        let run = |s: u64| {
            let mut rng = Stream::new(s);
            forward_sequence(
                ForwardMode::OpenLoop(&seq),
                &params.init_latents[0],
                &params,
                &spec,
                &mut rng,
                None,
            )
            .unwrap()
        };
        let a = run(seed ^ 0xabcd);
        let b = run(seed ^ 0xabcd);
        prop_assert_eq!(a.z, b.z);
        prop_assert_eq!(a.outputs, b.outputs);
    }
}
