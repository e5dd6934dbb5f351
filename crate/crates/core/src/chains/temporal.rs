//! Samplers for event times on `(0, 1)`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::urn::Urn;
use super::{
    collapsed_alpha_log_target, density_alpha_log_target, intensity_alpha_log_target, metropolis_log_alpha, run_chain,
    AlphaTuner, Allocations, DrawRecord, FitOutput, Formulation, McmcConfig, PriorConfig, Sampler,
    Weights,
};
use crate::basis::BernsteinBasis;
use crate::error::Result;
use crate::geometry::axis_cell;
use crate::pattern::check_events;
use crate::rng::{
    dirichlet_sample, gamma_sample, ln_gamma_sample, poisson_sample, sample_log_weights,
    sample_weights, substream, Stream, StreamRng,
};

/// `be(s_i | j, K − j + 1)` for all events, linear and log, row-major `n × K`.
#[derive(Debug, Clone)]
struct BasisTable {
    k: usize,
    lin: Vec<f64>,
    log: Vec<f64>,
}

impl BasisTable {
    fn new(events: &[f64], k: usize) -> Self {
        let basis = BernsteinBasis::new(k);
        let mut log = vec![0.0; events.len() * k];
        for (i, &s) in events.iter().enumerate() {
            basis.ln_eval_all(s, &mut log[i * k..(i + 1) * k]);
        }
        let lin = log.iter().map(|l| l.exp()).collect();
        BasisTable { k, lin, log }
    }

    fn lin_row(&self, i: usize) -> &[f64] {
        &self.lin[i * self.k..(i + 1) * self.k]
    }

    fn log_row(&self, i: usize) -> &[f64] {
        &self.log[i * self.k..(i + 1) * self.k]
    }
}

/// Index drawn ∝ `lin`, recomputing in log space if the weights underflow.
fn draw_index<R: Rng + ?Sized>(lin: &[f64], logs: impl FnOnce() -> Vec<f64>, rng: &mut R) -> usize {
    sample_weights(lin, rng)
        .or_else(|| sample_log_weights(&logs(), rng))
        .expect("at least one category has positive weight")
}

/// Gibbs sampler for the temporal intensity formulation with fixed K.
pub struct TemporalIntensitySampler {
    prior: PriorConfig,
    k: usize,
    table: BasisTable,
    alpha: f64,
    v: Vec<f64>,
    ln_v: Vec<f64>,
    xi: Vec<usize>,
    tuner: AlphaTuner,
    /// Tunes the α move that integrates the weights out.
    collapsed_tuner: AlphaTuner,
    unit_mass: Vec<f64>,
    rng: StreamRng,
    weights: Vec<f64>,
}

impl TemporalIntensitySampler {
    pub fn new(events: &[f64], prior: &PriorConfig, mcmc: &McmcConfig, chain: u32) -> Result<Self> {
        prior.validate()?;
        mcmc.validate()?;
        check_events(events)?;
        let k = prior.fixed_k("temporal intensity")?;
        let alpha = prior.alpha_mean();
        let v0 = alpha / (k as f64 * prior.c);
        let mut s = TemporalIntensitySampler {
            prior: prior.clone(),
            k,
            table: BasisTable::new(events, k),
            alpha,
            v: vec![v0; k],
            ln_v: vec![v0.ln(); k],
            xi: vec![0; events.len()],
            tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            collapsed_tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            unit_mass: vec![1.0; k],
            rng: substream(mcmc.seed, Stream::Chain(chain)),
            weights: vec![0.0; k],
        };
        s.update_allocations();
        Ok(s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Replaces the data, keeping the parameter state.
    pub fn set_events(&mut self, events: &[f64]) -> Result<()> {
        check_events(events)?;
        self.table = BasisTable::new(events, self.k);
        self.xi = vec![0; events.len()];
        self.update_allocations();
        Ok(())
    }

    fn update_allocations(&mut self) {
        for i in 0..self.xi.len() {
            for ((w, v), b) in self.weights.iter_mut().zip(&self.v).zip(self.table.lin_row(i)) {
                *w = v * b;
            }
            let (ln_v, row) = (&self.ln_v, self.table.log_row(i));
            self.xi[i] = draw_index(
                &self.weights,
                || ln_v.iter().zip(row).map(|(a, b)| a + b).collect(),
                &mut self.rng,
            );
        }
    }

    /// `M_k + α/K` and `C + 1`: the gamma full conditional of `V_k`.
    pub fn weight_conditional(&self, count: usize) -> (f64, f64) {
        (count as f64 + self.alpha / self.k as f64, self.prior.c + 1.0)
    }

    fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &j in &self.xi {
            counts[j] += 1;
        }
        counts
    }

    /// Metropolis move on α given the allocations, with the weights
    /// integrated out; the weights must be redrawn afterwards.
    fn update_alpha_collapsed(&mut self, counts: &[usize], burn_in: bool) {
        let (prior, masses) = (&self.prior, &self.unit_mass);
        let step = metropolis_log_alpha(
            self.alpha,
            |a| collapsed_alpha_log_target(a, prior, counts, masses),
            self.collapsed_tuner.sd(),
            &mut self.rng,
        );
        self.collapsed_tuner.observe(step, burn_in);
        self.alpha = step.alpha;
    }

    fn update_weights(&mut self, counts: &[usize]) {
        for j in 0..self.k {
            let (shape, rate) = self.weight_conditional(counts[j]);
            self.ln_v[j] = ln_gamma_sample(shape, rate, &mut self.rng);
            self.v[j] = self.ln_v[j].exp();
        }
    }

    fn update_alpha(&mut self, burn_in: bool) {
        let (prior, ln_v) = (&self.prior, &self.ln_v);
        let step = metropolis_log_alpha(
            self.alpha,
            |a| intensity_alpha_log_target(a, prior, ln_v),
            self.tuner.sd(),
            &mut self.rng,
        );
        self.tuner.observe(step, burn_in);
        self.alpha = step.alpha;
    }

    /// Draws a pattern from the current intensity `Σ V_k be(·|k, K−k+1)`.
    pub fn simulate_events<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let total: f64 = self.v.iter().sum();
        let n = poisson_sample(total, rng);
        let mut out: Vec<f64> = (0..n)
            .map(|_| {
                let j = draw_index(&self.v, || self.ln_v.clone(), rng) + 1;
                let beta = Beta::new(j as f64, (self.k - j + 1) as f64).expect("valid beta");
                open_unit(beta.sample(rng))
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Nudges a `[0, 1]` value into the open interval.
fn open_unit(s: f64) -> f64 {
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl Sampler for TemporalIntensitySampler {
    fn formulation(&self) -> Formulation {
        Formulation::TemporalIntensity
    }

    fn sweep(&mut self, burn_in: bool) {
        self.update_allocations();
        let counts = self.counts();
        self.update_alpha_collapsed(&counts, burn_in);
        self.update_weights(&counts);
        self.update_alpha(burn_in);
    }

    fn record(&mut self, iteration: usize, keep_allocations: bool) -> DrawRecord {
        DrawRecord {
            iteration,
            formulation: Formulation::TemporalIntensity,
            alpha: self.alpha,
            k: self.k,
            lambda: self.v.iter().sum(),
            weights: Weights::V(self.v.clone()),
            allocations: keep_allocations
                .then(|| Allocations::Xi(self.xi.iter().map(|x| x + 1).collect())),
        }
    }

    fn tuner(&self) -> &AlphaTuner {
        &self.tuner
    }
}

pub fn fit_temporal_intensity(
    events: &[f64],
    prior: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<FitOutput> {
    fit_temporal_intensity_chain(events, prior, mcmc, 0)
}

pub fn fit_temporal_intensity_chain(
    events: &[f64],
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chain: u32,
) -> Result<FitOutput> {
    let mut s = TemporalIntensitySampler::new(events, prior, mcmc, chain)?;
    Ok(run_chain(&mut s, mcmc, chain))
}

/// Successive-substitution chain (data redrawn from the current parameters
/// before every sweep). Returns `(α, Λ)` after each sweep; their marginals
/// should match the prior.
pub fn geweke_temporal_intensity(
    prior: &PriorConfig,
    iterations: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mcmc = McmcConfig {
        adapt_alpha: false,
        ..McmcConfig::new(iterations.max(1), 0, 1, seed)
    };
    let mut s = TemporalIntensitySampler::new(&[], prior, &mcmc, 0)?;
    let mut data_rng = substream(seed, Stream::Simulation);
    // Start the parameters from the prior rather than its mean.
    s.alpha = gamma_sample(prior.a_alpha, prior.b_alpha, &mut data_rng);
    for j in 0..s.k {
        s.ln_v[j] = ln_gamma_sample(s.alpha / s.k as f64, prior.c, &mut data_rng);
        s.v[j] = s.ln_v[j].exp();
    }
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let events = s.simulate_events(&mut data_rng);
        s.set_events(&events)?;
        s.sweep(false);
        out.push((s.alpha, s.v.iter().sum()));
    }
    Ok(out)
}

/// Pólya-urn sampler for the temporal density formulation with a prior on K.
pub struct TemporalDensitySampler {
    prior: PriorConfig,
    support: Vec<usize>,
    ln_prior: Vec<f64>,
    tables: Vec<BasisTable>,
    /// Index into `support` of the current K.
    current: usize,
    urn: Urn<f64>,
    alpha: f64,
    lambda: f64,
    tuner: AlphaTuner,
    rng: StreamRng,
    emit_rng: StreamRng,
    weights: Vec<f64>,
    ln_weights: Vec<f64>,
}

impl TemporalDensitySampler {
    pub fn new(events: &[f64], prior: &PriorConfig, mcmc: &McmcConfig, chain: u32) -> Result<Self> {
        prior.validate()?;
        mcmc.validate()?;
        check_events(events)?;
        let support = prior.k.support();
        let ln_prior = support.iter().map(|&k| prior.k.ln_mass(k)).collect();
        let tables: Vec<BasisTable> = {
            use rayon::prelude::*;
            support.par_iter().map(|&k| BasisTable::new(events, k)).collect()
        };
        let median = prior.k.median();
        let current = support.iter().position(|&k| k == median).expect("median in support");
        let mut s = TemporalDensitySampler {
            prior: prior.clone(),
            support,
            ln_prior,
            tables,
            current,
            urn: Urn::new(events.len()),
            alpha: prior.alpha_mean(),
            lambda: events.len() as f64 + 1.0,
            tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            rng: substream(mcmc.seed, Stream::Chain(chain)),
            emit_rng: substream(mcmc.seed, Stream::Emission(chain)),
            weights: Vec::new(),
            ln_weights: Vec::new(),
        };
        // Sequential seating: each event sees only the ones before it.
        for i in 0..events.len() {
            s.reseat(i);
        }
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.support[self.current]
    }

    pub fn clusters(&self) -> usize {
        self.urn.clusters()
    }

    fn n(&self) -> usize {
        self.urn.assign.len()
    }

    /// One urn update for event `i`. The fresh-value weight is `α · q₀` with
    /// `q₀ = K⁻¹ Σ_j be(s_i | j, ·) = 1`.
    fn reseat(&mut self, i: usize) {
        self.urn.detach(i);
        let table = &self.tables[self.current];
        let k = table.k;
        let row = table.lin_row(i);
        let log_row = table.log_row(i);
        let m = self.urn.clusters();
        self.weights.clear();
        self.weights
            .extend((0..m).map(|j| self.urn.counts[j] as f64 * row[self.urn.cells[j]]));
        self.weights.push(self.alpha);
        let choice = sample_weights(&self.weights, &mut self.rng).unwrap_or_else(|| {
            self.ln_weights.clear();
            self.ln_weights.extend(
                (0..m).map(|j| (self.urn.counts[j] as f64).ln() + log_row[self.urn.cells[j]]),
            );
            self.ln_weights.push(self.alpha.ln());
            sample_log_weights(&self.ln_weights, &mut self.rng).expect("fresh weight is positive")
        });
        if choice < m {
            self.urn.join(i, choice);
        } else {
            let cell = draw_index(row, || log_row.to_vec(), &mut self.rng);
            let u: f64 = self.rng.random();
            let theta = (cell as f64 + u) / k as f64;
            self.urn.open(i, theta, axis_cell(theta, k) - 1);
        }
    }

    fn update_k(&mut self) {
        if self.support.len() == 1 {
            return;
        }
        let logs: Vec<f64> = self
            .tables
            .iter()
            .zip(&self.ln_prior)
            .map(|(table, lp)| {
                let k = table.k;
                let cells: Vec<usize> = self.urn.values.iter().map(|&t| axis_cell(t, k) - 1).collect();
                let ll: f64 = self
                    .urn
                    .assign
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| table.log[i * k + cells[c]])
                    .sum();
                ll + lp
            })
            .collect();
        self.current = sample_log_weights(&logs, &mut self.rng).expect("finite K conditional");
        let k = self.k();
        self.urn.relabel_cells(|t| axis_cell(t, k) - 1);
    }

    fn update_alpha(&mut self, burn_in: bool) {
        let (prior, n, m, lambda) = (&self.prior, self.n(), self.urn.clusters(), self.lambda);
        let step = metropolis_log_alpha(
            self.alpha,
            |a| density_alpha_log_target(a, prior, n, m, lambda),
            self.tuner.sd(),
            &mut self.rng,
        );
        self.tuner.observe(step, burn_in);
        self.alpha = step.alpha;
    }
}

impl Sampler for TemporalDensitySampler {
    fn formulation(&self) -> Formulation {
        Formulation::TemporalDensity
    }

    fn sweep(&mut self, burn_in: bool) {
        for i in 0..self.n() {
            self.reseat(i);
        }
        self.lambda = gamma_sample(self.alpha + self.n() as f64, self.prior.c + 1.0, &mut self.rng);
        self.update_alpha(burn_in);
        self.update_k();
    }

    fn record(&mut self, iteration: usize, keep_allocations: bool) -> DrawRecord {
        let k = self.k();
        let counts = self.urn.cell_counts(k);
        let conc: Vec<f64> = counts.iter().map(|&c| self.alpha / k as f64 + c as f64).collect();
        DrawRecord {
            iteration,
            formulation: Formulation::TemporalDensity,
            alpha: self.alpha,
            k,
            lambda: self.lambda,
            weights: Weights::Omega(dirichlet_sample(&conc, &mut self.emit_rng)),
            allocations: keep_allocations.then(|| Allocations::Theta(self.urn.per_event())),
        }
    }

    fn tuner(&self) -> &AlphaTuner {
        &self.tuner
    }
}

pub fn fit_temporal_density(
    events: &[f64],
    prior: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<FitOutput> {
    fit_temporal_density_chain(events, prior, mcmc, 0)
}

pub fn fit_temporal_density_chain(
    events: &[f64],
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chain: u32,
) -> Result<FitOutput> {
    let mut s = TemporalDensitySampler::new(events, prior, mcmc, chain)?;
    Ok(run_chain(&mut s, mcmc, chain))
}
