//! MCMC samplers for the four model formulations and the primitives they
//! share: prior and run configuration, the log-scale α Metropolis step,
//! emitted draw records and pointwise intensity evaluation.

mod spatial;
mod temporal;
mod urn;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BernsteinBasis;
use crate::error::{Error, Result};
use crate::geometry::{BasisCache, CacheStore, Point};
use crate::pattern::PointPattern;
use crate::rng::normal_sample;
use crate::special::{ln_gamma, ln_gamma_density_log_x};

pub use spatial::{
    fit_spatial_density, fit_spatial_density_chain, fit_spatial_intensity,
    fit_spatial_intensity_chain, geweke_spatial_intensity, SpatialDensitySampler,
    SpatialIntensitySampler,
};
pub use temporal::{
    fit_temporal_density, fit_temporal_density_chain, fit_temporal_intensity,
    fit_temporal_intensity_chain, geweke_temporal_intensity, TemporalDensitySampler,
    TemporalIntensitySampler,
};

/// Target acceptance rate of the adaptive α proposal.
pub const TARGET_ACCEPTANCE: f64 = 0.44;
pub const DEFAULT_ALPHA_SD: f64 = 0.25;

/// Prior on the number of basis densities per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KPrior {
    Fixed { value: usize },
    DiscreteUniform { min: usize, max: usize },
    TruncatedPoisson { min: usize, max: usize, mean: f64 },
}

impl KPrior {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match *self {
            KPrior::Fixed { value } if value == 0 => bad("fixed K must be at least 1".into()),
            KPrior::DiscreteUniform { min, max } | KPrior::TruncatedPoisson { min, max, .. }
                if min == 0 || min > max =>
            {
                bad(format!("K support [{min}, {max}] is empty or starts below 1"))
            }
            KPrior::TruncatedPoisson { mean, .. } if !(mean > 0.0) => {
                bad(format!("truncated-Poisson mean must be positive, got {mean}"))
            }
            _ => Ok(()),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        match *self {
            KPrior::Fixed { value } => vec![value],
            KPrior::DiscreteUniform { min, max } | KPrior::TruncatedPoisson { min, max, .. } => {
                (min..=max).collect()
            }
        }
    }

    pub fn fixed(&self) -> Option<usize> {
        match *self {
            KPrior::Fixed { value } => Some(value),
            _ => None,
        }
    }

    /// Unnormalized log prior mass on the support.
    pub fn ln_mass(&self, k: usize) -> f64 {
        match *self {
            KPrior::Fixed { value } => {
                if k == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KPrior::DiscreteUniform { min, max } => {
                if (min..=max).contains(&k) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            KPrior::TruncatedPoisson { min, max, mean } => {
                if (min..=max).contains(&k) {
                    k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Smallest support point whose prior CDF reaches 1/2.
    pub fn median(&self) -> usize {
        let support = self.support();
        let logs: Vec<f64> = support.iter().map(|&k| self.ln_mass(k)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut acc = 0.0;
        for (k, wi) in support.iter().zip(&w) {
            acc += wi;
            if acc >= 0.5 * total {
                return *k;
            }
        }
        *support.last().expect("nonempty support")
    }
}

/// Hyperparameters shared by all formulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Rate of the gamma priors on `V` and `Λ`.
    #[serde(rename = "C")]
    pub c: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    #[serde(rename = "K")]
    pub k: KPrior,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("a_alpha", self.a_alpha), ("b_alpha", self.b_alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        self.k.validate()
    }

    pub fn alpha_mean(&self) -> f64 {
        self.a_alpha / self.b_alpha
    }

    fn fixed_k(&self, model: &str) -> Result<usize> {
        self.k.fixed().ok_or_else(|| {
            Error::InvalidConfig(format!("the {model} model requires a fixed K"))
        })
    }
}

fn default_sd() -> f64 {
    DEFAULT_ALPHA_SD
}

fn default_true() -> bool {
    true
}

fn default_thin() -> usize {
    1
}

fn default_chains() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total sweeps, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sd")]
    pub alpha_proposal_sd: f64,
    /// Robbins–Monro tuning of the α proposal during burn-in only.
    #[serde(default = "default_true")]
    pub adapt_alpha: bool,
    /// Store per-event latent values in each draw.
    #[serde(default = "default_true")]
    pub keep_allocations: bool,
    #[serde(default = "default_chains")]
    pub chains: usize,
}

impl McmcConfig {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        McmcConfig {
            iterations,
            burn_in,
            thin,
            seed,
            alpha_proposal_sd: DEFAULT_ALPHA_SD,
            adapt_alpha: true,
            keep_allocations: true,
            chains: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be at least 1".into()));
        }
        if !(self.alpha_proposal_sd > 0.0) {
            return Err(Error::InvalidConfig("alpha proposal sd must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidConfig("at least one chain is required".into()));
        }
        Ok(())
    }

    fn emits(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    TemporalIntensity,
    TemporalDensity,
    SpatialIntensity,
    SpatialDensity,
}

impl Formulation {
    pub fn is_spatial(self) -> bool {
        matches!(self, Formulation::SpatialIntensity | Formulation::SpatialDensity)
    }

    pub fn is_density(self) -> bool {
        matches!(self, Formulation::TemporalDensity | Formulation::SpatialDensity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::TemporalIntensity => "temporal-intensity",
            Formulation::TemporalDensity => "temporal-density",
            Formulation::SpatialIntensity => "spatial-intensity",
            Formulation::SpatialDensity => "spatial-density",
        }
    }
}

/// Mixture weights of one draw. Spatial tables are dense `K²`, row-major over
/// `(kx, ky)`; simplex weights are zero outside the index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum Weights {
    V(Vec<f64>),
    Omega(Vec<f64>),
}

impl Weights {
    pub fn values(&self) -> &[f64] {
        match self {
            Weights::V(v) | Weights::Omega(v) => v,
        }
    }
}

/// Per-event latent values. Basis indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum Allocations {
    Xi(Vec<usize>),
    XiEta(Vec<(usize, usize)>),
    Theta(Vec<f64>),
    Z(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub iteration: usize,
    pub formulation: Formulation,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    /// `Λ` (temporal) or `Λ_D` (spatial).
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub weights: Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocations: Option<Allocations>,
}

/// Result of one log-scale Metropolis step on α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaStep {
    pub alpha: f64,
    pub accepted: bool,
    /// The target returned NaN at the proposal.
    pub nan_target: bool,
}

/// Random walk on `ln α` with the Jacobian `α′/α` folded into the ratio.
pub fn metropolis_log_alpha<R, F>(current: f64, log_target: F, sd: f64, rng: &mut R) -> AlphaStep
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    debug_assert!(current > 0.0 && sd > 0.0);
    let proposal = (current.ln() + sd * normal_sample(rng)).exp();
    let uniform: f64 = rng.random();
    let new_target = log_target(proposal);
    if new_target.is_nan() || !(proposal > 0.0) || !proposal.is_finite() {
        return AlphaStep {
            alpha: current,
            accepted: false,
            nan_target: new_target.is_nan(),
        };
    }
    let log_ratio = new_target - log_target(current) + proposal.ln() - current.ln();
    if uniform.ln() < log_ratio {
        AlphaStep {
            alpha: proposal,
            accepted: true,
            nan_target: false,
        }
    } else {
        AlphaStep {
            alpha: current,
            accepted: false,
            nan_target: false,
        }
    }
}

/// Proposal-scale bookkeeping: Robbins–Monro on `ln sd` while adapting,
/// acceptance counts after.
#[derive(Debug, Clone)]
pub struct AlphaTuner {
    ln_sd: f64,
    adapt: bool,
    step: usize,
    accepted: usize,
    proposed: usize,
    nan_targets: usize,
}

impl AlphaTuner {
    pub fn new(sd: f64, adapt: bool) -> Self {
        AlphaTuner {
            ln_sd: sd.ln(),
            adapt,
            step: 0,
            accepted: 0,
            proposed: 0,
            nan_targets: 0,
        }
    }

    pub fn sd(&self) -> f64 {
        self.ln_sd.exp()
    }

    /// Records a step; `burn_in` selects adaptation versus counting.
    pub fn observe(&mut self, step: AlphaStep, burn_in: bool) {
        if step.nan_target {
            self.nan_targets += 1;
        }
        if burn_in {
            if self.adapt {
                self.step += 1;
                let gain = (self.step as f64).powf(-0.6);
                let hit = if step.accepted { 1.0 } else { 0.0 };
                self.ln_sd = (self.ln_sd + gain * (hit - TARGET_ACCEPTANCE)).clamp(-7.0, 2.5);
            }
        } else {
            self.proposed += 1;
            if step.accepted {
                self.accepted += 1;
            }
        }
    }

    /// Post-burn-in acceptance rate (0 before any post-burn-in step).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn nan_targets(&self) -> usize {
        self.nan_targets
    }
}

/// Log full conditional of α in the intensity formulations: its gamma prior
/// times `Π Ga(V_j | α / m, C)` over `m` weights.
pub fn intensity_alpha_log_target(alpha: f64, prior: &PriorConfig, ln_v: &[f64]) -> f64 {
    if !(alpha > 0.0) {
        return f64::NEG_INFINITY;
    }
    let shape = alpha / ln_v.len() as f64;
    let prior_term = (prior.a_alpha - 1.0) * alpha.ln() - prior.b_alpha * alpha;
    prior_term
        + ln_v
            .iter()
            .map(|&lv| ln_gamma_density_log_x(lv, shape, prior.c))
            .sum::<f64>()
}

/// Log density of α given the allocation counts with the weights integrated
/// out: its gamma prior times `Π C^a Γ(a + M_j) / {Γ(a) (C + B_j)^a}`, where
/// `a = α / m` over `m` weights and `B_j` is the mass of basis `j`. Factors
/// free of α are dropped.
pub fn collapsed_alpha_log_target(alpha: f64, prior: &PriorConfig, counts: &[usize], masses: &[f64]) -> f64 {
    if !(alpha > 0.0) {
        return f64::NEG_INFINITY;
    }
    let shape = alpha / counts.len() as f64;
    let ln_shape_gamma = ln_gamma(shape);
    let prior_term = (prior.a_alpha - 1.0) * alpha.ln() - prior.b_alpha * alpha;
    prior_term
        + counts
            .iter()
            .zip(masses)
            .map(|(&m, &b)| {
                let occupied = if m > 0 { ln_gamma(shape + m as f64) - ln_shape_gamma } else { 0.0 };
                occupied + shape * (prior.c / (prior.c + b)).ln()
            })
            .sum::<f64>()
}

/// Log full conditional of α in the density formulations, with `n` events,
/// `clusters` distinct latent values and total intensity `lambda`.
pub fn density_alpha_log_target(
    alpha: f64,
    prior: &PriorConfig,
    n: usize,
    clusters: usize,
    lambda: f64,
) -> f64 {
    if !(alpha > 0.0) {
        return f64::NEG_INFINITY;
    }
    // Γ(α)/Γ(α+n) from the urn and 1/Γ(α) from Ga(Λ | α, C) cancel to 1/Γ(α+n).
    -ln_gamma(alpha + n as f64) + clusters as f64 * alpha.ln() + alpha * prior.c.ln()
        + (alpha - 1.0) * lambda.ln()
        + (prior.a_alpha - 1.0) * alpha.ln()
        - prior.b_alpha * alpha
}

/// Draws and run statistics of one chain.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub formulation: Formulation,
    pub chain: u32,
    pub draws: Vec<DrawRecord>,
    pub alpha_acceptance: f64,
    pub alpha_sd: f64,
    pub nan_targets: usize,
}

pub(crate) trait Sampler {
    fn formulation(&self) -> Formulation;
    fn sweep(&mut self, burn_in: bool);
    fn record(&mut self, iteration: usize, keep_allocations: bool) -> DrawRecord;
    fn tuner(&self) -> &AlphaTuner;
}

pub(crate) fn run_chain<S: Sampler>(sampler: &mut S, mcmc: &McmcConfig, chain: u32) -> FitOutput {
    let mut draws = Vec::with_capacity((mcmc.iterations - mcmc.burn_in).div_ceil(mcmc.thin));
    for t in 0..mcmc.iterations {
        sampler.sweep(t < mcmc.burn_in);
        if mcmc.emits(t) {
            draws.push(sampler.record(t, mcmc.keep_allocations));
        }
    }
    let tuner = sampler.tuner();
    FitOutput {
        formulation: sampler.formulation(),
        chain,
        draws,
        alpha_acceptance: tuner.acceptance_rate(),
        alpha_sd: tuner.sd(),
        nan_targets: tuner.nan_targets(),
    }
}

/// Runs chain `chain` of `formulation` on `pattern`. Spatial formulations
/// need `store`.
pub fn fit_chain(
    formulation: Formulation,
    pattern: &PointPattern,
    store: Option<&CacheStore>,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chain: u32,
) -> Result<FitOutput> {
    let mismatch = || {
        Error::InvalidConfig(format!(
            "the {} model cannot use a {}-D pattern",
            formulation.name(),
            if formulation.is_spatial() { 1 } else { 2 }
        ))
    };
    if formulation.is_spatial() {
        let points = pattern.as_spatial().ok_or_else(mismatch)?;
        let store = store.ok_or_else(|| Error::InvalidConfig("a spatial model needs a domain".into()))?;
        match formulation {
            Formulation::SpatialIntensity => fit_spatial_intensity_chain(points, store, prior, mcmc, chain),
            _ => fit_spatial_density_chain(points, store, prior, mcmc, chain),
        }
    } else {
        let events = pattern.as_temporal().ok_or_else(mismatch)?;
        match formulation {
            Formulation::TemporalIntensity => fit_temporal_intensity_chain(events, prior, mcmc, chain),
            _ => fit_temporal_density_chain(events, prior, mcmc, chain),
        }
    }
}

fn expect_formulation(draw: &DrawRecord, spatial: bool) -> Result<()> {
    if draw.formulation.is_spatial() != spatial {
        return Err(Error::InvalidConfig(format!(
            "a {} draw cannot be evaluated on {} points",
            draw.formulation.name(),
            if spatial { "2-D" } else { "1-D" }
        )));
    }
    Ok(())
}

/// `λ(s)` of a temporal draw at each point.
pub fn evaluate_intensity_1d(draw: &DrawRecord, points: &[f64]) -> Result<Vec<f64>> {
    expect_formulation(draw, false)?;
    let k = draw.k;
    let basis = BernsteinBasis::new(k);
    let (scale, w) = match &draw.weights {
        Weights::V(v) => (1.0, v),
        Weights::Omega(w) => (draw.lambda, w),
    };
    if w.len() != k {
        return Err(Error::KMismatch { draw: w.len(), cache: k });
    }
    let mut be = vec![0.0; k];
    points
        .iter()
        .map(|&s| {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::EventOutOfRange(s));
            }
            basis.eval_all(s, &mut be);
            Ok(scale * w.iter().zip(&be).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect()
}

pub fn evaluate_density_1d(draw: &DrawRecord, points: &[f64]) -> Result<Vec<f64>> {
    let lambda = evaluate_intensity_1d(draw, points)?;
    Ok(lambda.into_iter().map(|l| l / draw.lambda).collect())
}

/// `λ_D(x, y)` of a spatial draw at each point. Points are assumed to lie in
/// the cache's domain.
pub fn evaluate_intensity_2d(
    draw: &DrawRecord,
    points: &[Point],
    cache: &BasisCache,
) -> Result<Vec<f64>> {
    expect_formulation(draw, true)?;
    if draw.k != cache.k() {
        return Err(Error::KMismatch {
            draw: draw.k,
            cache: cache.k(),
        });
    }
    let k = draw.k;
    let basis = BernsteinBasis::new(k);
    // Fold the formulation into one coefficient per basis index.
    let coef: Vec<f64> = match &draw.weights {
        Weights::V(v) => v.clone(),
        Weights::Omega(w) => w
            .iter()
            .zip(cache.b())
            .map(|(w, b)| if *w > 0.0 { draw.lambda * w / b } else { 0.0 })
            .collect(),
    };
    if coef.len() != k * k {
        return Err(Error::KMismatch {
            draw: (coef.len() as f64).sqrt() as usize,
            cache: k,
        });
    }
    let mut bx = vec![0.0; k];
    let mut by = vec![0.0; k];
    Ok(points
        .iter()
        .map(|p| {
            basis.eval_all(p.x.clamp(0.0, 1.0), &mut bx);
            basis.eval_all(p.y.clamp(0.0, 1.0), &mut by);
            let mut total = 0.0;
            for (kx, bxv) in bx.iter().enumerate() {
                let row = &coef[kx * k..(kx + 1) * k];
                let inner: f64 = row.iter().zip(&by).map(|(c, b)| c * b).sum();
                total += bxv * inner;
            }
            total
        })
        .collect())
}

pub fn evaluate_density_2d(
    draw: &DrawRecord,
    points: &[Point],
    cache: &BasisCache,
) -> Result<Vec<f64>> {
    let lambda = evaluate_intensity_2d(draw, points, cache)?;
    Ok(lambda.into_iter().map(|l| l / draw.lambda).collect())
}
