//! Prior specification from a few guesses about the intensity: the gamma
//! rate `C` and α prior from a total and an average intensity, and the
//! number of basis densities from a peak intensity.

use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile_sorted;
use crate::error::{Error, Result};
use crate::rng::{gamma_sample, ln_gamma_sample, substream, Stream};

/// Shortfall allowed below `Λ̂` when `λ̂ ≤ Λ̂`. The median of `Λ` stays below
/// its mean `λ̂` for every `C` and only approaches it as `C → ∞`.
pub const MEDIAN_SHORTFALL: f64 = 0.005;

fn default_quantile() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationInput {
    /// Guess at the total intensity over the window.
    #[serde(rename = "Lambda_hat")]
    pub total: f64,
    /// Guess at the average intensity.
    #[serde(rename = "lambda_bar_hat")]
    pub average: f64,
    /// Guess at the peak intensity.
    #[serde(rename = "lambda_max_hat", default, skip_serializing_if = "Option::is_none")]
    pub peak: Option<f64>,
    pub b_alpha: f64,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
}

impl ElicitationInput {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("Lambda_hat", Some(self.total)),
            ("lambda_bar_hat", Some(self.average)),
            ("lambda_max_hat", self.peak),
            ("b_alpha", Some(self.b_alpha)),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile must lie in (0, 1), got {}",
                self.quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenRate {
    #[serde(rename = "C")]
    pub c: f64,
    pub a_alpha: f64,
    /// Monte Carlo median of `Λ` at the returned `C`.
    pub median: f64,
    /// `|median − Λ̂| / Λ̂`.
    pub relative_error: f64,
}

/// Monte Carlo median of `Λ` under `α ~ Ga(b C λ̂, b)`, `Λ | α ~ Ga(α, C)`.
/// The same seed gives the same stream for every `C`.
pub fn lambda_median(c: f64, average: f64, b_alpha: f64, mc: usize, seed: u64) -> f64 {
    let mut rng = substream(seed, Stream::Elicitation);
    let a_alpha = b_alpha * c * average;
    let mut draws: Vec<f64> = (0..mc)
        .map(|_| {
            let alpha = gamma_sample(a_alpha, b_alpha, &mut rng).max(f64::MIN_POSITIVE);
            ln_gamma_sample(alpha, c, &mut rng).exp()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    quantile_sorted(&draws, 0.5)
}

/// Solves for `C` with median of `Λ` equal to `Λ̂` by bisection on `ln C`
/// over `[1e-8, 1e4]`; `a_α = b_α C λ̂` keeps `E(λ(s)) = λ̂`.
pub fn choose_c(input: &ElicitationInput, mc: usize, seed: u64) -> Result<ChosenRate> {
    input.validate()?;
    if mc < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "choose_c needs at least 10^4 Monte Carlo draws, got {mc}"
        )));
    }
    let target = if input.average > input.total {
        input.total
    } else {
        input.total * (1.0 - MEDIAN_SHORTFALL)
    };
    let residual = |ln_c: f64| lambda_median(ln_c.exp(), input.average, input.b_alpha, mc, seed) - target;
    let (mut lo, mut hi) = (1e-8_f64.ln(), 1e4_f64.ln());
    let (f_lo, f_hi) = (residual(lo), residual(hi));
    if !(f_lo < 0.0 && f_hi >= 0.0) {
        return Err(Error::BracketFailure {
            lo: lo.exp(),
            hi: hi.exp(),
            f_lo,
            f_hi,
        });
    }
    // The median rises with C; 48 halvings take the log-width below 1e-13.
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi.exp();
    let median = lambda_median(c, input.average, input.b_alpha, mc, seed);
    Ok(ChosenRate {
        c,
        a_alpha: input.b_alpha * c * input.average,
        median,
        relative_error: (median - input.total).abs() / input.total,
    })
}

/// Mode height of `beta(2, K − 1)`: `K (1 − 1/(K − 1))^{K−2}`.
pub fn b_star(k: usize) -> Result<f64> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!("b_star needs K ≥ 3, got {k}")));
    }
    let kf = k as f64;
    Ok(kf * (1.0 - 1.0 / (kf - 1.0)).powi(k as i32 - 2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub value: f64,
    /// Half the spread between the order statistics at `nq ± √(nq(1−q))`.
    pub se: f64,
}

/// Monte Carlo `q`-quantile of `max_k V_k` with `V_k ~ Ga(α/K, C)` i.i.d.
/// given `α ~ Ga(a_α, b_α)`.
pub fn vmax_quantile(
    k: usize,
    a_alpha: f64,
    b_alpha: f64,
    c: f64,
    q: f64,
    mc: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    if k == 0 || !(a_alpha > 0.0 && b_alpha > 0.0 && c > 0.0) || !(q > 0.0 && q < 1.0) || mc < 2 {
        return Err(Error::InvalidConfig(format!(
            "vmax_quantile: invalid inputs K={k}, a={a_alpha}, b={b_alpha}, C={c}, q={q}, mc={mc}"
        )));
    }
    let mut rng = substream(seed, Stream::Elicitation);
    let kf = k as f64;
    let mut draws: Vec<f64> = (0..mc)
        .map(|_| {
            let alpha = gamma_sample(a_alpha, b_alpha, &mut rng).max(f64::MIN_POSITIVE);
            let ln_max = (0..k)
                .map(|_| ln_gamma_sample(alpha / kf, 1.0, &mut rng))
                .fold(f64::NEG_INFINITY, f64::max);
            ln_max.exp() / c
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let n = mc as f64;
    let spread = (n * q * (1.0 - q)).sqrt();
    let at = |pos: f64| quantile_sorted(&draws, (pos / (n - 1.0)).clamp(0.0, 1.0));
    let centre = q * (n - 1.0);
    Ok(QuantileEstimate {
        value: quantile_sorted(&draws, q),
        se: 0.5 * (at(centre + spread) - at(centre - spread)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub q_se: f64,
    pub b_star: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub rows: Vec<KRow>,
    /// Smallest K with `b* Q ≥ λ̂_max`; `None` when no peak guess is given
    /// or no candidate reaches it.
    pub recommended_k: Option<usize>,
}

/// Table of `(K, Q_q(V_max), b*, b* Q)` over `candidates`, sorted by K.
pub fn k_selection_table(
    input: &ElicitationInput,
    candidates: &[usize],
    a_alpha: f64,
    c: f64,
    mc: usize,
    seed: u64,
) -> Result<KSelection> {
    input.validate()?;
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no K candidates given".into()));
    }
    let mut ks = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rows = ks
        .iter()
        .map(|&k| {
            let b = b_star(k)?;
            let qe = vmax_quantile(k, a_alpha, input.b_alpha, c, input.quantile, mc, seed)?;
            Ok(KRow {
                k,
                q: qe.value,
                q_se: qe.se,
                b_star: b,
                product: b * qe.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let recommended_k = input
        .peak
        .and_then(|peak| rows.iter().find(|r| r.product >= peak).map(|r| r.k));
    Ok(KSelection { rows, recommended_k })
}

/// Everything the `elicit` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationReport {
    #[serde(rename = "C")]
    pub c: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub median: f64,
    pub table: Vec<KRow>,
    #[serde(rename = "recommended_K")]
    pub recommended_k: Option<usize>,
}
