//! Small special-function helpers shared by the basis and quadrature code.

pub use statrs::function::gamma::ln_gamma;

/// `ln C(n, k)`.
///
/// Computed as a product of ratios in `f64` while the coefficient fits
/// (n ≤ 1020), which keeps the relative error near `k·eps`; falls back to
/// log-gamma beyond that.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if n <= 1020 {
        let mut c = 1.0_f64;
        for i in 1..=k {
            c = c * ((n - k + i) as f64) / (i as f64);
        }
        c.ln()
    } else {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    }
}

/// Binomial(n, x) probabilities for j = 0..=n, written into `out`.
pub fn binomial_pmf(n: usize, x: f64, ln_binom: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), n + 1);
    if x <= 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if x >= 1.0 {
        out.fill(0.0);
        out[n] = 1.0;
        return;
    }
    let lx = x.ln();
    let l1x = (-x).ln_1p();
    for (j, o) in out.iter_mut().enumerate() {
        *o = (ln_binom[j] + j as f64 * lx + (n - j) as f64 * l1x).exp();
    }
}

/// Upper binomial tails `P(Bin(n, x) ≥ k)` for k = 1..=n, written into
/// `out[k - 1]`. These are the regularized incomplete beta values
/// `I_x(k, n - k + 1)`.
pub fn bernstein_cdf_all(n: usize, x: f64, ln_binom: &[f64], pmf: &mut [f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), n);
    binomial_pmf(n, x, ln_binom, pmf);
    let mut tail = 0.0;
    for k in (1..=n).rev() {
        tail += pmf[k];
        out[k - 1] = tail.min(1.0);
    }
}

/// `I_x(k, n - k + 1)` for a single k.
pub fn bernstein_cdf(n: usize, k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let lx = x.ln();
    let l1x = (-x).ln_1p();
    let mut tail = 0.0;
    for j in (k..=n).rev() {
        tail += (ln_choose(n, j) + j as f64 * lx + (n - j) as f64 * l1x).exp();
    }
    tail.min(1.0)
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Log density of Ga(shape, rate) at `x`.
pub fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Same as [`ln_gamma_density`] but taking `ln x` directly, so values that
/// underflow in linear space still contribute.
pub fn ln_gamma_density_log_x(ln_x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * ln_x - rate * ln_x.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta_reg;

    #[test]
    fn ln_choose_small_values() {
        assert_eq!(ln_choose(5, 0), 0.0);
        assert!((ln_choose(5, 2) - 10f64.ln()).abs() < 1e-15);
        assert!((ln_choose(40, 20) - 137846528820f64.ln()).abs() < 1e-13);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_choose_large_matches_lgamma() {
        let n = 1500;
        let k = 700;
        let expected =
            ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
        assert!((ln_choose(n, k) - expected).abs() < 1e-9);
        assert!((ln_choose(1000, 400) - (ln_gamma(1001.0) - ln_gamma(401.0) - ln_gamma(601.0))).abs() < 1e-9);
    }

    #[test]
    fn bernstein_cdf_matches_incomplete_beta() {
        for &n in &[1usize, 2, 5, 20, 60] {
            for k in 1..=n {
                for &x in &[0.0, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0] {
                    let got = bernstein_cdf(n, k, x);
                    let want = beta_reg(k as f64, (n - k + 1) as f64, x);
                    assert!((got - want).abs() < 1e-12, "n={n} k={k} x={x}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn cdf_all_agrees_with_single() {
        let n = 25;
        let lb: Vec<f64> = (0..=n).map(|j| ln_choose(n, j)).collect();
        let mut pmf = vec![0.0; n + 1];
        let mut out = vec![0.0; n];
        bernstein_cdf_all(n, 0.37, &lb, &mut pmf, &mut out);
        for k in 1..=n {
            assert!((out[k - 1] - bernstein_cdf(n, k, 0.37)).abs() < 1e-14);
        }
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
