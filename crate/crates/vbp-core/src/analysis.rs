//! Behavioral measures: divergence steps, N-gram statistics, periodicity,
//! and sigma traces.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain_err;
use crate::error::Result;
use crate::net::LatentTrace;
use crate::pipeline::Label;
use crate::seqdata::Trajectory2D;
use crate::shape_err;

/// Default per-step mean-square-error threshold for divergence detection.
pub const DIVERGENCE_THRESHOLD: f64 = 0.025;

/// First step (1-based) at which the per-step MSE between target and
/// generated points exceeds `threshold`; `None` if they never diverge.
///
/// Per-step MSE is the mean of the squared per-coordinate differences.
pub fn divergence_step(
    target: &Trajectory2D,
    generated: &Trajectory2D,
    threshold: f64,
) -> Result<Option<usize>> {
    if target.step_count() != generated.step_count() {
        return Err(shape_err!(
            "target has {} steps, generated has {}",
            target.step_count(),
            generated.step_count()
        ));
    }
    if !(threshold > 0.0) {
        return Err(domain_err!("threshold must be positive, got {}", threshold));
    }
    for (t, (a, b)) in target.points().iter().zip(generated.points()).enumerate() {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let mse = (dx * dx + dy * dy) / 2.0;
        if mse > threshold {
            return Ok(Some(t + 1));
        }
    }
    Ok(None)
}

/// Per-sequence divergence steps and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// 1-based first divergence step per sequence, `None` if never.
    pub per_sequence: Vec<Option<usize>>,
    pub lengths: Vec<usize>,
    /// Mean divergence step; non-diverging sequences count their full
    /// length, so full retention of a 400-step pattern scores 400.
    pub ads: f64,
    pub threshold: f64,
}

/// Average divergence step over target/generated pairs.
pub fn average_divergence_step(
    pairs: &[(&Trajectory2D, &Trajectory2D)],
    threshold: f64,
) -> Result<DivergenceReport> {
    if pairs.is_empty() {
        return Err(domain_err!("need at least one sequence pair"));
    }
    let mut per_sequence = Vec::with_capacity(pairs.len());
    let mut lengths = Vec::with_capacity(pairs.len());
    let mut sum = 0.0;
    for (target, generated) in pairs {
        let step = divergence_step(target, generated, threshold)?;
        per_sequence.push(step);
        lengths.push(target.step_count());
        sum += step.unwrap_or(target.step_count()) as f64;
    }
    Ok(DivergenceReport {
        per_sequence,
        lengths,
        ads: sum / pairs.len() as f64,
        threshold,
    })
}

/// Smoothed distribution over all |alphabet|^N label tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramDistribution {
    n: usize,
    counts: Vec<u64>,
    probs: Vec<f64>,
    epsilon: f64,
    windows: usize,
}

impl NGramDistribution {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn window_count(&self) -> usize {
        self.windows
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Probabilities over the full 3^N support, summing to 1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Decode a support index into its label tuple (first label varies
    /// slowest).
    pub fn tuple(&self, mut index: usize) -> Vec<Label> {
        let mut out = vec![Label::A; self.n];
        for slot in (0..self.n).rev() {
            out[slot] = Label::from_index(index % 3).unwrap();
            index /= 3;
        }
        out
    }
}

/// Sliding-window N-gram counts over a label sequence with add-epsilon
/// smoothing over the full 3^N support.
pub fn ngram_distribution(labels: &[Label], n: usize, epsilon: f64) -> Result<NGramDistribution> {
    if n == 0 {
        return Err(domain_err!("N-gram order must be >= 1"));
    }
    if labels.len() < n {
        return Err(domain_err!(
            "need at least {} labels for {}-grams, got {}",
            n,
            n,
            labels.len()
        ));
    }
    if !(epsilon >= 0.0) {
        return Err(domain_err!("smoothing epsilon must be non-negative"));
    }
    let support = 3usize.pow(n as u32);
    let mut counts = vec![0u64; support];
    for window in labels.windows(n) {
        let mut idx = 0usize;
        for &label in window {
            idx = idx * 3 + label.index();
        }
        counts[idx] += 1;
    }
    let windows = labels.len() - n + 1;
    let denom = windows as f64 + epsilon * support as f64;
    let probs = counts
        .iter()
        .map(|&c| (c as f64 + epsilon) / denom)
        .collect();
    Ok(NGramDistribution {
        n,
        counts,
        probs,
        epsilon,
        windows,
    })
}

/// KL divergence `sum p log(p/q)` (natural log) between two probability
/// vectors of equal length. `q` must be positive wherever `p` is.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(shape_err!(
            "distributions have different support ({} vs {})",
            p.len(),
            q.len()
        ));
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if pi == 0.0 {
            continue;
        }
        if !(qi > 0.0) {
            return Err(domain_err!(
                "q has zero mass where p is positive; smooth both distributions first"
            ));
        }
        sum += pi * libm::log(pi / qi);
    }
    Ok(sum)
}

/// KL divergence between two smoothed N-gram distributions of the same
/// order. Convention: `p` is the target-generator distribution and `q` the
/// trained model's.
pub fn ngram_kl(p: &NGramDistribution, q: &NGramDistribution) -> Result<f64> {
    if p.n != q.n {
        return Err(shape_err!(
            "N-gram orders differ ({} vs {})",
            p.n,
            q.n
        ));
    }
    kl_divergence(&p.probs, &q.probs)
}

/// Dominant nonzero-lag autocorrelation peak of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicityReport {
    pub peak_lag: usize,
    pub peak_correlation: f64,
    /// The trajectory never moves; reported as peak 1 at lag 1.
    pub constant: bool,
    /// Peak correlation below 0.3: no meaningful periodicity.
    pub aperiodic: bool,
}

/// Mean-removed normalized autocorrelation, averaged over the two
/// coordinates, scanned over lags `1..=max_lag`.
pub fn periodicity_score(traj: &Trajectory2D, max_lag: usize) -> Result<PeriodicityReport> {
    if max_lag == 0 {
        return Err(domain_err!("max lag must be >= 1"));
    }
    let n = traj.step_count();
    if n <= 2 * max_lag {
        return Err(domain_err!(
            "trajectory length {} must exceed twice the max lag {}",
            n,
            max_lag
        ));
    }
    let coord = |axis: usize| -> Vec<f64> { traj.points().iter().map(|p| p[axis]).collect() };
    let xs = [coord(0), coord(1)];
    let mut means = [0.0; 2];
    let mut vars = [0.0; 2];
    for a in 0..2 {
        means[a] = xs[a].iter().sum::<f64>() / n as f64;
        vars[a] = xs[a].iter().map(|v| (v - means[a]) * (v - means[a])).sum::<f64>() / n as f64;
    }
    let active: Vec<usize> = (0..2).filter(|&a| vars[a] > 1e-18).collect();
    if active.is_empty() {
        return Ok(PeriodicityReport {
            peak_lag: 1,
            peak_correlation: 1.0,
            constant: true,
            aperiodic: false,
        });
    }

    let mut acf = vec![0.0; max_lag + 1];
    acf[0] = 1.0;
    for lag in 1..=max_lag {
        let mut r = 0.0;
        for &a in &active {
            let series = &xs[a];
            let count = n - lag;
            let mut acc = 0.0;
            for i in 0..count {
                acc += (series[i] - means[a]) * (series[i + lag] - means[a]);
            }
            r += acc / (count as f64 * vars[a]);
        }
        acf[lag] = r / active.len() as f64;
    }

    // the dominant peak is the strongest local maximum; a bare global
    // maximum would always sit on the small-lag ramp of a smooth series
    let mut peak: Option<(usize, f64)> = None;
    for lag in 1..=max_lag {
        let left = acf[lag - 1];
        let right = if lag == max_lag {
            f64::NEG_INFINITY
        } else {
            acf[lag + 1]
        };
        if acf[lag] > left && acf[lag] >= right {
            match peak {
                Some((_, best)) if best >= acf[lag] => {}
                _ => peak = Some((lag, acf[lag])),
            }
        }
    }
    // monotone ACF (no interior peak): fall back to the largest value
    let (peak_lag, peak_corr) = peak.unwrap_or_else(|| {
        let mut best = (1, acf[1]);
        for lag in 2..=max_lag {
            if acf[lag] > best.1 {
                best = (lag, acf[lag]);
            }
        }
        best
    });
    Ok(PeriodicityReport {
        peak_lag,
        peak_correlation: peak_corr,
        constant: false,
        aperiodic: peak_corr < 0.3,
    })
}

/// Sigma summary over a unit selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStats {
    pub mean: f64,
    pub max: f64,
    /// One sigma time series per selected unit, covering steps 2..T.
    pub series: Vec<Vec<f64>>,
    pub units: Vec<usize>,
}

/// Extract sigma time series and summary statistics for selected units.
///
/// Step 1 carries no recognition model, so series start at step 2.
pub fn sigma_statistics(trace: &LatentTrace, units: &[usize]) -> Result<SigmaStats> {
    if units.is_empty() {
        return Err(domain_err!("select at least one unit"));
    }
    for &u in units {
        if u >= trace.unit_count() {
            return Err(domain_err!(
                "unit index {} out of range ({} units)",
                u,
                trace.unit_count()
            ));
        }
    }
    let mut series = Vec::with_capacity(units.len());
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    let mut count = 0usize;
    for &u in units {
        let s: Vec<f64> = (1..trace.step_count()).map(|t| trace.sigma[t][u]).collect();
        for &v in &s {
            sum += v;
            if v > max {
                max = v;
            }
            count += 1;
        }
        series.push(s);
    }
    Ok(SigmaStats {
        mean: sum / count as f64,
        max,
        series,
        units: units.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::Mat;
    use crate::net::{forward_sequence, ForwardMode, NetworkSpec, Parameters};
    use crate::rng::Stream;
    use crate::seqdata::EncodedSequence;

    fn traj_from(points: Vec<[f64; 2]>) -> Trajectory2D {
        Trajectory2D::new(points).unwrap()
    }

    #[test]
    fn identical_sequences_never_diverge() {
        let t = traj_from(vec![[0.2, 0.8]; 50]);
        assert_eq!(divergence_step(&t, &t, 0.025).unwrap(), None);
    }

    #[test]
    fn constructed_offset_diverges_at_step_100() {
        let mut a = vec![[0.3, 0.3]; 120];
        let mut b = vec![[0.3, 0.3]; 120];
        for step in 99..120 {
            b[step] = [0.8, 0.8]; // offset (0.5, 0.5): MSE 0.25 > 0.025
        }
        let (a, b) = (traj_from(a), traj_from(b));
        assert_eq!(divergence_step(&a, &b, 0.025).unwrap(), Some(100));
    }

    #[test]
    fn divergence_matches_scan_oracle() {
        let mut rng = Stream::new(77);
        for _ in 0..20 {
            let n = 60;
            let a: Vec<[f64; 2]> = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
            let b: Vec<[f64; 2]> = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
            // brute-force oracle written independently of divergence_step
            let mut oracle = None;
            for t in 0..n {
                let d0 = a[t][0] - b[t][0];
                let d1 = a[t][1] - b[t][1];
                if (d0 * d0 + d1 * d1) / 2.0 > 0.025 {
                    oracle = Some(t + 1);
                    break;
                }
            }
            let (ta, tb) = (traj_from(a), traj_from(b));
            assert_eq!(divergence_step(&ta, &tb, 0.025).unwrap(), oracle);
        }
    }

    #[test]
    fn divergence_is_monotone_in_threshold() {
        let mut rng = Stream::new(123);
        let n = 80;
        let a: Vec<[f64; 2]> = (0..n).map(|_| [rng.next_f64(), rng.next_f64()]).collect();
        let b: Vec<[f64; 2]> = a
            .iter()
            .map(|p| {
                [
                    (p[0] + 0.1 * rng.next_f64()).min(1.0),
                    (p[1] + 0.1 * rng.next_f64()).min(1.0),
                ]
            })
            .collect();
        let (ta, tb) = (traj_from(a), traj_from(b));
        let mut prev = Some(0);
        for &thr in &[0.001, 0.005, 0.025, 0.1] {
            let step = divergence_step(&ta, &tb, thr).unwrap();
            let effective = step.unwrap_or(usize::MAX);
            let prev_effective = prev.unwrap_or(usize::MAX);
            assert!(effective >= prev_effective);
            prev = step;
        }
    }

    #[test]
    fn divergence_rejects_length_mismatch() {
        let a = traj_from(vec![[0.1, 0.1]; 5]);
        let b = traj_from(vec![[0.1, 0.1]; 6]);
        assert!(divergence_step(&a, &b, 0.025).is_err());
    }

    #[test]
    fn ads_counts_non_diverging_as_full_length() {
        let t = traj_from(vec![[0.5, 0.5]; 400]);
        let report = average_divergence_step(&[(&t, &t), (&t, &t)], 0.025).unwrap();
        assert_eq!(report.ads, 400.0);
        assert_eq!(report.per_sequence, vec![None, None]);
    }

    #[test]
    fn ads_averages_divergence_steps() {
        let make_pair = |at: usize| {
            let a = vec![[0.2, 0.2]; 400];
            let mut b = vec![[0.2, 0.2]; 400];
            for p in b.iter_mut().skip(at - 1) {
                *p = [0.9, 0.9];
            }
            (traj_from(a), traj_from(b))
        };
        let (a1, b1) = make_pair(100);
        let (a2, b2) = make_pair(300);
        let report = average_divergence_step(&[(&a1, &b1), (&a2, &b2)], 0.025).unwrap();
        assert_eq!(report.ads, 200.0);
    }

    #[test]
    fn ngram_of_constant_sequence_concentrates() {
        let labels = vec![Label::A; 4];
        let dist = ngram_distribution(&labels, 3, 1e-6).unwrap();
        assert_eq!(dist.window_count(), 2);
        let aaa = 0usize; // index of (A, A, A)
        assert!(dist.probs()[aaa] > 0.999);
        let sum: f64 = dist.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ngram_window_count_is_len_minus_n_plus_one() {
        let labels = vec![Label::A, Label::B, Label::C, Label::A, Label::B];
        let dist = ngram_distribution(&labels, 3, 1e-6).unwrap();
        assert_eq!(dist.window_count(), 3);
        assert!(ngram_distribution(&labels[..2], 3, 1e-6).is_err());
    }

    #[test]
    fn ngram_of_uniform_labels_is_near_uniform() {
        let mut rng = Stream::new(42);
        let labels: Vec<Label> = (0..100_000)
            .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
            .collect();
        let dist = ngram_distribution(&labels, 3, 1e-6).unwrap();
        for &p in dist.probs() {
            assert!((p - 1.0 / 27.0).abs() < 0.01, "p = {}", p);
        }
    }

    #[test]
    fn ngram_streaming_equals_batch() {
        // counting the same labels in two chunks with a shared overlap must
        // equal batch counting (invariance to how windows are enumerated)
        let mut rng = Stream::new(9);
        let labels: Vec<Label> = (0..500)
            .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
            .collect();
        let n = 3;
        let batch = ngram_distribution(&labels, n, 0.0).unwrap();
        let mut counts = vec![0u64; 27];
        for chunk_start in (0..labels.len()).step_by(100) {
            let end = (chunk_start + 100 + n - 1).min(labels.len());
            for window in labels[chunk_start..end].windows(n) {
                let mut idx = 0;
                for &l in window {
                    idx = idx * 3 + l.index();
                }
                counts[idx] += 1;
            }
        }
        assert_eq!(batch.counts(), &counts[..]);
    }

    #[test]
    fn kl_of_identical_distributions_is_exactly_zero() {
        let labels = vec![Label::A, Label::B, Label::B, Label::A, Label::B, Label::C];
        let p = ngram_distribution(&labels, 3, 1e-6).unwrap();
        assert_eq!(ngram_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_two_point_analytic() {
        // 0.5 ln 2 + 0.5 ln(2/3)
        let p = [0.5, 0.5];
        let q = [0.25, 0.75];
        let expect = 0.5 * libm::log(2.0) + 0.5 * libm::log(2.0 / 3.0);
        let got = kl_divergence(&p, &q).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.14384).abs() < 1e-5);
    }

    #[test]
    fn kl_rejects_order_mismatch() {
        let labels = vec![Label::A; 10];
        let p = ngram_distribution(&labels, 2, 1e-6).unwrap();
        let q = ngram_distribution(&labels, 3, 1e-6).unwrap();
        assert!(ngram_kl(&p, &q).is_err());
    }

    #[test]
    fn kl_is_nonnegative_on_random_smoothed_pairs() {
        let mut rng = Stream::new(31);
        for _ in 0..50 {
            let draw = |rng: &mut Stream| -> Vec<Label> {
                (0..200)
                    .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
                    .collect()
            };
            let p = ngram_distribution(&draw(&mut rng), 3, 1e-6).unwrap();
            let q = ngram_distribution(&draw(&mut rng), 3, 1e-6).unwrap();
            let kl = ngram_kl(&p, &q).unwrap();
            assert!(kl >= 0.0, "kl = {}", kl);
        }
    }

    #[test]
    fn sine_period_is_recovered() {
        let n = 1000;
        let points: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let u = i as f64 / 50.0 * core::f64::consts::TAU;
                [0.5 + 0.3 * libm::sin(u), 0.5 + 0.3 * libm::cos(u)]
            })
            .collect();
        let report = periodicity_score(&traj_from(points), 75).unwrap();
        assert_eq!(report.peak_lag, 50);
        assert!(report.peak_correlation > 0.99);
        assert!(!report.aperiodic);
    }

    #[test]
    fn white_noise_has_low_peak() {
        let mut rng = Stream::new(4);
        let points: Vec<[f64; 2]> = (0..4000)
            .map(|_| [rng.next_f64(), rng.next_f64()])
            .collect();
        let report = periodicity_score(&traj_from(points), 100).unwrap();
        assert!(report.peak_correlation < 0.1, "{}", report.peak_correlation);
        assert!(report.aperiodic);
    }

    #[test]
    fn constant_trajectory_is_flagged() {
        let report = periodicity_score(&traj_from(vec![[0.4, 0.4]; 100]), 10).unwrap();
        assert!(report.constant);
        assert_eq!(report.peak_lag, 1);
        assert_eq!(report.peak_correlation, 1.0);
    }

    #[test]
    fn periodicity_rejects_short_input() {
        assert!(periodicity_score(&traj_from(vec![[0.4, 0.4]; 20]), 10).is_err());
    }

    fn trace_with_sigma_bias(bias: f64) -> LatentTrace {
        let spec = NetworkSpec::new(vec![3, 2], vec![2.0, 8.0], 4, 4).unwrap();
        let c = spec.total_units();
        let params = Parameters {
            w_mu_c: Mat::zeros(c, c),
            w_mu_x: Mat::zeros(3, 4),
            w_sigma_c: Mat::zeros(c, c),
            w_x_c: Mat::zeros(4, 3),
            b_mu: vec![0.1; c],
            b_sigma: vec![bias; c],
            b_x: vec![0.0; 4],
            init_latents: vec![vec![0.05; c]],
        };
        let seq = EncodedSequence::new(vec![vec![0.25; 4]; 12]).unwrap();
        let mut rng = Stream::new(50);
        forward_sequence(
            ForwardMode::OpenLoop(&seq),
            &params.init_latents[0],
            &params,
            &spec,
            &mut rng,
            None,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_limit_sigma_is_tiny() {
        let trace = trace_with_sigma_bias(-40.0);
        let stats = sigma_statistics(&trace, &[0, 1, 2, 3, 4]).unwrap();
        assert!(stats.mean < 1e-8, "mean sigma {}", stats.mean);
    }

    #[test]
    fn zero_sigma_path_gives_unit_sigma() {
        let trace = trace_with_sigma_bias(0.0);
        let stats = sigma_statistics(&trace, &[0, 4]).unwrap();
        assert_eq!(stats.mean, 1.0);
        assert_eq!(stats.max, 1.0);
    }

    #[test]
    fn sigma_stats_match_naive_recomputation() {
        let trace = trace_with_sigma_bias(-0.5);
        let units = [1usize, 3];
        let stats = sigma_statistics(&trace, &units).unwrap();
        let mut naive_sum = 0.0;
        let mut naive_max = f64::NEG_INFINITY;
        let mut n = 0;
        for &u in &units {
            for t in 1..trace.step_count() {
                naive_sum += trace.sigma[t][u];
                naive_max = naive_max.max(trace.sigma[t][u]);
                n += 1;
            }
        }
        assert!((stats.mean - naive_sum / n as f64).abs() < 1e-15);
        assert_eq!(stats.max, naive_max);
        assert_eq!(stats.series.len(), 2);
        assert_eq!(stats.series[0].len(), trace.step_count() - 1);
    }

    #[test]
    fn sigma_stats_reject_bad_unit() {
        let trace = trace_with_sigma_bias(0.0);
        assert!(sigma_statistics(&trace, &[99]).is_err());
        assert!(sigma_statistics(&trace, &[]).is_err());
    }
}
