//! Seeded random streams and the few samplers the chains need beyond
//! `rand_distr`.
//!
//! Every consumer draws from its own ChaCha stream derived from one 64-bit
//! seed, so adding a consumer never shifts the numbers another one sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::special::log_sum_exp;

pub type StreamRng = ChaCha20Rng;

/// Named substreams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// MCMC transitions of chain `i`.
    Chain(u32),
    /// Emission-only draws (Dirichlet weights) of chain `i`.
    Emission(u32),
    /// Poisson draws for predictive residuals, one stream per draw index.
    Residuals(u64),
    Simulation,
    Elicitation,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Chain(i) => (1 << 60) | i as u64,
            Stream::Emission(i) => (2 << 60) | i as u64,
            Stream::Residuals(d) => (3 << 60) | (d & ((1 << 60) - 1)),
            Stream::Simulation => 4 << 60,
            Stream::Elicitation => 5 << 60,
        }
    }
}

pub fn substream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// `ln G` for `G ~ Ga(shape, rate)`.
///
/// Small shapes use `G = G' · U^{1/shape}` with `G' ~ Ga(shape + 1)` carried
/// out in log space, so the result stays finite where `G` itself would
/// underflow to zero.
pub fn ln_gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "Ga({shape}, {rate})");
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
        g.ln() - rate.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = rng.random::<f64>();
        // random() is in [0, 1); map 0 to the smallest positive double.
        let lu = if u > 0.0 { u.ln() } else { f64::MIN_POSITIVE.ln() };
        g.ln() + lu / shape - rate.ln()
    }
}

pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    ln_gamma_sample(shape, rate, rng).exp()
}

pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    let v: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    v as u64
}

pub fn normal_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Dirichlet draw via normalized log-gamma variates; entries with zero
/// concentration get weight exactly zero.
pub fn dirichlet_sample<R: Rng + ?Sized>(concentration: &[f64], rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            if a > 0.0 {
                ln_gamma_sample(a, 1.0, rng)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let total = log_sum_exp(&logs);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - total).exp()).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

/// Inverse-CDF draw from unnormalized log weights. `-inf` entries are never
/// chosen. Returns `None` when every weight is `-inf` or NaN.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = log_weights
        .iter()
        .map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() })
        .sum();
    let u = rng.random::<f64>() * total;
    pick(log_weights.iter().map(|&l| if l.is_nan() { 0.0 } else { (l - max).exp() }), u)
}

/// Inverse-CDF draw from nonnegative weights; falls back to the log-space
/// path when they underflow to a zero total.
pub fn sample_weights<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        let u = rng.random::<f64>() * total;
        return pick(weights.iter().copied(), u);
    }
    let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    sample_log_weights(&logs, rng)
}

fn pick(weights: impl Iterator<Item = f64>, u: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    // u landed on the rounding gap at the top of the scale.
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::statistics::Statistics;

    fn first_words(seed: u64, stream: Stream) -> Vec<u64> {
        let mut r = substream(seed, stream);
        (0..4).map(|_| r.random()).collect()
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        assert_eq!(first_words(7, Stream::Chain(0)), first_words(7, Stream::Chain(0)));
        assert_ne!(first_words(7, Stream::Chain(0)), first_words(7, Stream::Chain(1)));
        assert_ne!(first_words(7, Stream::Chain(0)), first_words(7, Stream::Emission(0)));
        assert_ne!(first_words(7, Stream::Simulation), first_words(8, Stream::Simulation));
    }

    #[test]
    fn small_shape_gamma_stays_finite_and_has_correct_mean() {
        let mut rng = substream(1, Stream::Simulation);
        let shape = 0.005;
        let draws: Vec<f64> = (0..200_000).map(|_| ln_gamma_sample(shape, 2.0, &mut rng)).collect();
        assert!(draws.iter().all(|l| l.is_finite()));
        let mean = draws.iter().map(|l| l.exp()).mean();
        // Ga(0.005, 2): mean 0.0025, sd ≈ 0.0354; the mean is heavy-tailed so
        // allow 5 standard errors.
        let se = (shape).sqrt() / 2.0 / (200_000f64).sqrt();
        assert!((mean - shape / 2.0).abs() < 5.0 * se, "{mean}");
    }

    #[test]
    fn large_shape_gamma_moments() {
        let mut rng = substream(2, Stream::Simulation);
        let draws: Vec<f64> = (0..100_000).map(|_| gamma_sample(5.1, 1.023, &mut rng)).collect();
        let m = draws.iter().copied().mean();
        assert!((m - 5.1 / 1.023).abs() < 0.03, "{m}");
    }

    #[test]
    fn dirichlet_is_a_simplex_with_right_means() {
        let mut rng = substream(3, Stream::Simulation);
        let conc = [0.5, 1.5, 0.0, 3.0];
        let mut acc = [0.0; 4];
        for _ in 0..50_000 {
            let w = dirichlet_sample(&conc, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(w[2], 0.0);
            for (a, x) in acc.iter_mut().zip(&w) {
                *a += x / 50_000.0;
            }
        }
        for (a, c) in acc.iter().zip(conc) {
            assert!((a - c / 5.0).abs() < 0.01, "{a} vs {}", c / 5.0);
        }
    }

    #[test]
    fn discrete_sampling_matches_weights_and_skips_zeros() {
        let mut rng = substream(4, Stream::Simulation);
        let logs = [0.0_f64.ln(), 1.0_f64.ln(), 3.0_f64.ln()];
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[sample_log_weights(&logs, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        assert!((counts[2] as f64 / 40_000.0 - 0.75).abs() < 0.01);
        assert_eq!(sample_log_weights(&[f64::NEG_INFINITY], &mut rng), None);
        // Underflowing linear weights take the log path.
        assert_eq!(sample_weights(&[0.0, 1e-320 * 1e-10], &mut rng), None);
        assert_eq!(sample_weights(&[0.0, 2.0], &mut rng), Some(1));
    }

    #[test]
    fn poisson_handles_zero_mean() {
        let mut rng = substream(5, Stream::Simulation);
        assert_eq!(poisson_sample(0.0, &mut rng), 0);
        let m: f64 = (0..20_000).map(|_| poisson_sample(12.5, &mut rng) as f64).sum::<f64>() / 20_000.0;
        assert!((m - 12.5).abs() < 0.1);
    }
}
