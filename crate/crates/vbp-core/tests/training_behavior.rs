//! Desk-scale behavioral checks of the training loop: sigma collapse in
//! the deterministic limit, the sigma-vs-W trend, and lower-bound ascent.

use vbp_core::net::NetworkSpec;
use vbp_core::seqdata::{Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{train, AdamConfig, EpochRecord, NoHooks, TrainingConfig};

/// One fixed sequence (a small circle): held constant across epochs.
fn circle_dataset() -> (Dataset, NetworkSpec) {
    let codec = GridCodec::new(5, 5, 250.0).unwrap();
    let points: Vec<[f64; 2]> = (0..48)
        .map(|i| {
            let u = i as f64 / 24.0 * std::f64::consts::TAU;
            [0.5 + 0.3 * u.sin(), 0.5 + 0.3 * u.cos()]
        })
        .collect();
    let traj = Trajectory2D::new(points).unwrap();
    let dataset = Dataset::from_trajectories(
        vec![traj],
        codec,
        DatasetMeta {
            seed: 0,
            provenance: "toy".into(),
        },
    )
    .unwrap();
    let spec = NetworkSpec::new(vec![6, 3], vec![2.0, 4.0], 25, 25).unwrap();
    (dataset, spec)
}

fn toy_config(w: f64, epochs: usize, seed: u64) -> TrainingConfig {
    TrainingConfig {
        meta_prior_w: w,
        epochs,
        batch_size: 1,
        adam: AdamConfig {
            alpha: 0.01,
            ..AdamConfig::default()
        },
        seed,
        gradient_clip: None,
    }
}

fn final_record(log: &[EpochRecord]) -> &EpochRecord {
    log.last().expect("nonempty log")
}

#[test]
fn deterministic_limit_collapses_sigma_and_fits() {
    let (dataset, spec) = circle_dataset();
    let mut config = toy_config(0.0, 2000, 37);
    config.adam.alpha = 0.05;
    config.gradient_clip = Some(5.0);
    let (_, log) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
    let last = final_record(&log);
    eprintln!(
        "W=0 toy: total {:.4} l_x {:.4} mean_sigma {:.5}",
        last.total, last.l_x, last.mean_sigma
    );
    // reconstruction error approaches its floor: the per-step gap between
    // l_x and its maximum (minus the summed target entropies)
    let max_lx: f64 = dataset.sequences()[0]
        .frames()
        .iter()
        .map(|f| {
            f.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
        })
        .sum();
    let steps = dataset.sequences()[0].step_count() as f64;
    let per_step_gap = (max_lx - last.l_x) / steps;
    eprintln!("per-step reconstruction gap {:.6}", per_step_gap);
    assert!(per_step_gap < 0.05, "gap {}", per_step_gap);
    assert!(last.mean_sigma < 0.05, "mean sigma {}", last.mean_sigma);
}

#[test]
fn final_sigma_is_non_decreasing_in_w() {
    let (dataset, spec) = circle_dataset();
    let mut sigmas = Vec::new();
    for &w in &[0.0, 0.01, 0.1, 0.2] {
        let config = toy_config(w, 2000, 7);
        let (_, log) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
        sigmas.push(final_record(&log).mean_sigma);
    }
    eprintln!("sigma by W: {:?}", sigmas);
    for pair in sigmas.windows(2) {
        assert!(
            pair[1] >= pair[0],
            "sigma decreased along W: {:?}",
            sigmas
        );
    }
}

#[test]
fn sigma_trend_holds_across_seeds() {
    // median final sigma over 5 seeds, per W
    let (dataset, spec) = circle_dataset();
    let ws = [0.0, 0.01, 0.1, 0.2];
    let mut medians = Vec::new();
    for &w in &ws {
        let mut finals: Vec<f64> = (0..5)
            .map(|seed| {
                let config = toy_config(w, 1500, 100 + seed);
                let (_, log) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
                final_record(&log).mean_sigma
            })
            .collect();
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(finals[2]);
    }
    eprintln!("median sigma by W: {:?}", medians);
    for pair in medians.windows(2) {
        assert!(pair[1] >= pair[0], "medians {:?}", medians);
    }
}

#[test]
fn lower_bound_rises_on_smoothed_windows() {
    let (dataset, spec) = circle_dataset();
    let config = toy_config(0.01, 250, 3);
    let (_, log) = train(&dataset, &spec, &config, &mut NoHooks).unwrap();
    let totals: Vec<f64> = log.iter().map(|r| r.total).collect();
    let window = 10;
    let smoothed: Vec<f64> = totals
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let mut rises = 0usize;
    let mut steps = 0usize;
    for pair in smoothed.windows(2) {
        steps += 1;
        if pair[1] >= pair[0] - 1e-9 {
            rises += 1;
        }
    }
    let frac = rises as f64 / steps as f64;
    eprintln!("rising fraction {:.4}", frac);
    assert!(frac >= 0.95, "only {:.3} of smoothed windows rise", frac);
}
