//! Independent numerical oracles for the closed-form terms.

use vbp_core::analysis::{kl_divergence, ngram_distribution, ngram_kl};
use vbp_core::net::{kl_term, LatentTrace};
use vbp_core::pipeline::Label;
use vbp_core::rng::Stream;

/// Build a minimal trace whose only counted step carries the given
/// per-unit (mu, sigma).
fn trace_with(mu: &[f64], sigma: &[f64]) -> LatentTrace {
    let units = mu.len();
    LatentTrace::from_parts(
        vec![vec![0.0; units], mu.to_vec()],
        vec![vec![1.0; units], sigma.to_vec()],
        vec![vec![0.0; units]; 2],
        vec![vec![0.0; units]; 2],
        vec![vec![0.0; units]; 2],
        vec![vec![1.0]; 2],
    )
    .unwrap()
}

#[test]
fn kl_term_matches_monte_carlo_estimate() {
    // kl_term for a single unit and single counted step equals
    // -KL(N(mu, sigma^2) || N(0, 1)); estimate that expectation directly by
    // sampling x ~ N(mu, sigma^2) and averaging log N(x;0,1) - log N(x;mu,sigma^2)
    let mut rng = Stream::new(20_002);
    let samples = 1_000_000usize;
    for case in 0..15 {
        let mu = rng.next_range(-1.5, 1.5);
        let sigma = rng.next_range(0.35, 2.0);
        let closed = kl_term(&trace_with(&[mu], &[sigma])).unwrap();

        let ln_sigma = sigma.ln();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let eps = rng.standard_normal();
            let x = mu + sigma * eps;
            let f = -0.5 * x * x + 0.5 * eps * eps + ln_sigma;
            sum += f;
            sum_sq += f * f;
        }
        let mean = sum / samples as f64;
        let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
        let se = (var / samples as f64).sqrt();
        assert!(
            (closed - mean).abs() <= 3.0 * se,
            "case {}: closed {} vs MC {} (3 SE = {})",
            case,
            closed,
            mean,
            3.0 * se
        );
    }
}

#[test]
fn kl_term_averages_over_units_and_steps() {
    // two units, three counted steps: the closed form must equal the sum of
    // per-(unit, step) single KLs divided by the unit count
    let mut rng = Stream::new(5);
    let units = 2;
    let steps = 4;
    let mut mu = vec![vec![0.0; units]];
    let mut sigma = vec![vec![1.0; units]];
    for _ in 1..steps {
        mu.push((0..units).map(|_| rng.next_range(-1.0, 1.0)).collect());
        sigma.push((0..units).map(|_| rng.next_range(0.5, 1.5)).collect());
    }
    let trace = LatentTrace::from_parts(
        mu.clone(),
        sigma.clone(),
        vec![vec![0.0; units]; steps],
        vec![vec![0.0; units]; steps],
        vec![vec![0.0; units]; steps],
        vec![vec![1.0]; steps],
    )
    .unwrap();
    let got = kl_term(&trace).unwrap();
    let mut expect = 0.0;
    for t in 1..steps {
        for i in 0..units {
            expect += kl_term(&trace_with(&[mu[t][i]], &[sigma[t][i]])).unwrap();
        }
    }
    expect /= units as f64;
    assert!((got - expect).abs() < 1e-12, "{} vs {}", got, expect);
}

/// Reference KL: per-term log difference, Kahan-compensated summation over
/// terms sorted by magnitude.
fn kl_reference(p: &[f64], q: &[f64]) -> f64 {
    let mut terms: Vec<f64> = p
        .iter()
        .zip(q.iter())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
        .collect();
    terms.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let y = t - comp;
        let next = sum + y;
        comp = (next - sum) - y;
        sum = next;
    }
    sum
}

fn random_distribution(rng: &mut Stream, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.next_range(0.01, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[test]
fn kl_divergence_matches_high_precision_reference() {
    let mut rng = Stream::new(808);
    for _ in 0..100 {
        let p = random_distribution(&mut rng, 27);
        let q = random_distribution(&mut rng, 27);
        let got = kl_divergence(&p, &q).unwrap();
        let expect = kl_reference(&p, &q);
        assert!(
            (got - expect).abs() <= 1e-12,
            "got {} expect {} (diff {})",
            got,
            expect,
            (got - expect).abs()
        );
    }
}

#[test]
fn ngram_kl_of_identical_inputs_is_exactly_zero() {
    let mut rng = Stream::new(3);
    let labels: Vec<Label> = (0..300)
        .map(|_| Label::from_index(rng.next_below(3) as usize).unwrap())
        .collect();
    let p = ngram_distribution(&labels, 3, 1e-6).unwrap();
    let q = ngram_distribution(&labels, 3, 1e-6).unwrap();
    assert_eq!(ngram_kl(&p, &q).unwrap(), 0.0);
}
