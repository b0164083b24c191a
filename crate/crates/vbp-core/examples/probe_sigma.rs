use vbp_core::net::NetworkSpec;
use vbp_core::seqdata::{Dataset, DatasetMeta, GridCodec, Trajectory2D};
use vbp_core::train::{train, AdamConfig, NoHooks, TrainingConfig};

fn dataset(steps: usize) -> (Dataset, NetworkSpec) {
    let codec = GridCodec::new(5, 5, 250.0).unwrap();
    let points: Vec<[f64; 2]> = (0..steps)
        .map(|i| {
            let u = i as f64 / 24.0 * std::f64::consts::TAU;
            [0.5 + 0.3 * u.sin(), 0.5 + 0.3 * u.cos()]
        })
        .collect();
    let traj = Trajectory2D::new(points).unwrap();
    let d = Dataset::from_trajectories(
        vec![traj], codec,
        DatasetMeta { seed: 0, provenance: "toy".into() },
    ).unwrap();
    let spec = NetworkSpec::new(vec![6, 3], vec![2.0, 4.0], 25, 25).unwrap();
    (d, spec)
}

fn main() {
    // sigma-collapse toy across seeds
    let (d, spec) = dataset(48);
    for seed in [7u64, 17, 27, 37, 47] {
        let cfg = TrainingConfig {
            meta_prior_w: 0.0, epochs: 2000, batch_size: 1,
            adam: AdamConfig { alpha: 0.05, ..AdamConfig::default() }, seed,
            gradient_clip: Some(5.0),
        };
        let (_, log) = train(&d, &spec, &cfg, &mut NoHooks).unwrap();
        print!(" s{}={:.4}", seed, log.last().unwrap().mean_sigma);
    }
    println!();
    // rising-window fractions at different epoch budgets
    for epochs in [150usize, 250, 400] {
        let cfg = TrainingConfig {
            meta_prior_w: 0.01, epochs, batch_size: 1,
            adam: AdamConfig { alpha: 0.01, ..AdamConfig::default() }, seed: 3,
            gradient_clip: None,
        };
        let (_, log) = train(&d, &spec, &cfg, &mut NoHooks).unwrap();
        let totals: Vec<f64> = log.iter().map(|r| r.total).collect();
        let smoothed: Vec<f64> = totals.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        let rises = smoothed.windows(2).filter(|p| p[1] >= p[0] - 1e-9).count();
        println!("epochs {}: rising {:.3}", epochs, rises as f64 / (smoothed.len() - 1) as f64);
    }
}
