//! Samplers for locations in a polygonal window of the unit square.

use std::sync::Arc;

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
use crate::geometry::{axis_cell, BasisCache, CacheStore, Point, PolygonDomain, Rect};
use crate::pattern::check_points;
use crate::rng::{
    dirichlet_sample, gamma_sample, ln_gamma_sample, poisson_sample, sample_log_weights,
    sample_weights, substream, Stream, StreamRng,
};

/// Per-axis basis values at every point, row-major `n × K`, linear and log.
#[derive(Debug, Clone)]
struct AxisTables {
    k: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    ln_x: Vec<f64>,
    ln_y: Vec<f64>,
}

impl AxisTables {
    fn new(points: &[Point], k: usize) -> Self {
        let basis = BernsteinBasis::new(k);
        let mut ln_x = vec![0.0; points.len() * k];
        let mut ln_y = vec![0.0; points.len() * k];
        for (i, p) in points.iter().enumerate() {
            basis.ln_eval_all(p.x.clamp(0.0, 1.0), &mut ln_x[i * k..(i + 1) * k]);
            basis.ln_eval_all(p.y.clamp(0.0, 1.0), &mut ln_y[i * k..(i + 1) * k]);
        }
        AxisTables {
            k,
            x: ln_x.iter().map(|l| l.exp()).collect(),
            y: ln_y.iter().map(|l| l.exp()).collect(),
            ln_x,
            ln_y,
        }
    }

    /// `φ_{flat}(p_i)`.
    fn phi(&self, i: usize, flat: usize) -> f64 {
        let (kx, ky) = (flat / self.k, flat % self.k);
        self.x[i * self.k + kx] * self.y[i * self.k + ky]
    }

    fn ln_phi(&self, i: usize, flat: usize) -> f64 {
        let (kx, ky) = (flat / self.k, flat % self.k);
        self.ln_x[i * self.k + kx] + self.ln_y[i * self.k + ky]
    }
}

/// Flat 0-based cell of the K×K grid holding `p`.
fn flat_cell(p: Point, k: usize) -> usize {
    (axis_cell(p.x, k) - 1) * k + axis_cell(p.y, k) - 1
}

fn cell_rect(flat: usize, k: usize) -> Rect {
    Rect::grid_cell(flat / k + 1, flat % k + 1, k)
}

/// Index drawn ∝ `lin`, recomputing in log space if the weights underflow.
fn draw_index<R: Rng + ?Sized>(lin: &[f64], logs: impl FnOnce() -> Vec<f64>, rng: &mut R) -> usize {
    sample_weights(lin, rng)
        .or_else(|| sample_log_weights(&logs(), rng))
        .expect("at least one category has positive weight")
}

/// Gibbs sampler for the spatial intensity formulation with fixed K.
pub struct SpatialIntensitySampler {
    prior: PriorConfig,
    k: usize,
    domain: PolygonDomain,
    cache: Arc<BasisCache>,
    tables: AxisTables,
    alpha: f64,
    v: Vec<f64>,
    ln_v: Vec<f64>,
    /// Flat 0-based basis index of each point.
    alloc: Vec<usize>,
    tuner: AlphaTuner,
    /// Tunes the α move that integrates the weights out.
    collapsed_tuner: AlphaTuner,
    rng: StreamRng,
    weights: Vec<f64>,
}

impl SpatialIntensitySampler {
    pub fn new(
        points: &[Point],
        store: &CacheStore,
        prior: &PriorConfig,
        mcmc: &McmcConfig,
        chain: u32,
    ) -> Result<Self> {
        prior.validate()?;
        mcmc.validate()?;
        check_points(points, store.domain())?;
        let k = prior.fixed_k("spatial intensity")?;
        let cache = store.get(k)?;
        let alpha = prior.alpha_mean();
        let v0 = alpha / ((k * k) as f64 * prior.c);
        let mut s = SpatialIntensitySampler {
            prior: prior.clone(),
            k,
            domain: store.domain().clone(),
            cache,
            tables: AxisTables::new(points, k),
            alpha,
            v: vec![v0; k * k],
            ln_v: vec![v0.ln(); k * k],
            alloc: vec![0; points.len()],
            tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            collapsed_tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            rng: substream(mcmc.seed, Stream::Chain(chain)),
            weights: vec![0.0; k * k],
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

    /// `Λ_D = Σ V B`.
    pub fn total_intensity(&self) -> f64 {
        self.v.iter().zip(self.cache.b()).map(|(v, b)| v * b).sum()
    }

    pub fn set_points(&mut self, points: &[Point]) -> Result<()> {
        check_points(points, &self.domain)?;
        self.tables = AxisTables::new(points, self.k);
        self.alloc = vec![0; points.len()];
        self.update_allocations();
        Ok(())
    }

    fn update_allocations(&mut self) {
        let kk = self.k * self.k;
        for i in 0..self.alloc.len() {
            for (flat, w) in self.weights.iter_mut().enumerate() {
                *w = self.v[flat] * self.tables.phi(i, flat);
            }
            let (ln_v, tables) = (&self.ln_v, &self.tables);
            self.alloc[i] = draw_index(
                &self.weights,
                || (0..kk).map(|f| ln_v[f] + tables.ln_phi(i, f)).collect(),
                &mut self.rng,
            );
        }
    }

    /// `M + α/K²` and `C + B`: the gamma full conditional of one weight.
    pub fn weight_conditional(&self, flat: usize, count: usize) -> (f64, f64) {
        (
            count as f64 + self.alpha / (self.k * self.k) as f64,
            self.prior.c + self.cache.b()[flat],
        )
    }

    fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k * self.k];
        for &j in &self.alloc {
            counts[j] += 1;
        }
        counts
    }

    /// Metropolis move on α given the allocations, with the weights
    /// integrated out; the weights must be redrawn afterwards.
    fn update_alpha_collapsed(&mut self, counts: &[usize], burn_in: bool) {
        let (prior, masses) = (&self.prior, self.cache.b());
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
        for (flat, &count) in counts.iter().enumerate() {
            let (shape, rate) = self.weight_conditional(flat, count);
            self.ln_v[flat] = ln_gamma_sample(shape, rate, &mut self.rng);
            self.v[flat] = self.ln_v[flat].exp();
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

    /// Draws a pattern from the current intensity restricted to the domain:
    /// a component is chosen ∝ `V B`, then a point by rejection from its
    /// product-beta density.
    pub fn simulate_points<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        let mass: Vec<f64> = self.v.iter().zip(self.cache.b()).map(|(v, b)| v * b).collect();
        let n = poisson_sample(mass.iter().sum(), rng);
        let k = self.k;
        (0..n)
            .map(|_| {
                let flat = draw_index(&mass, || mass.iter().map(|m| m.ln()).collect(), rng);
                let (kx, ky) = (flat / k + 1, flat % k + 1);
                let bx = Beta::new(kx as f64, (k - kx + 1) as f64).expect("valid beta");
                let by = Beta::new(ky as f64, (k - ky + 1) as f64).expect("valid beta");
                loop {
                    let p = Point::new(bx.sample(rng), by.sample(rng));
                    if self.domain.contains(p) {
                        break p;
                    }
                }
            })
            .collect()
    }
}

impl Sampler for SpatialIntensitySampler {
    fn formulation(&self) -> Formulation {
        Formulation::SpatialIntensity
    }

    fn sweep(&mut self, burn_in: bool) {
        self.update_allocations();
        let counts = self.counts();
        self.update_alpha_collapsed(&counts, burn_in);
        self.update_weights(&counts);
        self.update_alpha(burn_in);
    }

    fn record(&mut self, iteration: usize, keep_allocations: bool) -> DrawRecord {
        let k = self.k;
        DrawRecord {
            iteration,
            formulation: Formulation::SpatialIntensity,
            alpha: self.alpha,
            k,
            lambda: self.total_intensity(),
            weights: Weights::V(self.v.clone()),
            allocations: keep_allocations.then(|| {
                Allocations::XiEta(self.alloc.iter().map(|&f| (f / k + 1, f % k + 1)).collect())
            }),
        }
    }

    fn tuner(&self) -> &AlphaTuner {
        &self.tuner
    }
}

pub fn fit_spatial_intensity(
    points: &[Point],
    store: &CacheStore,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<FitOutput> {
    fit_spatial_intensity_chain(points, store, prior, mcmc, 0)
}

pub fn fit_spatial_intensity_chain(
    points: &[Point],
    store: &CacheStore,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chain: u32,
) -> Result<FitOutput> {
    let mut s = SpatialIntensitySampler::new(points, store, prior, mcmc, chain)?;
    Ok(run_chain(&mut s, mcmc, chain))
}

/// Successive-substitution chain for the spatial intensity sampler. Returns
/// `(α, Λ_D)` after each sweep.
pub fn geweke_spatial_intensity(
    store: &CacheStore,
    prior: &PriorConfig,
    iterations: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mcmc = McmcConfig {
        adapt_alpha: false,
        ..McmcConfig::new(iterations.max(1), 0, 1, seed)
    };
    let mut s = SpatialIntensitySampler::new(&[], store, prior, &mcmc, 0)?;
    let mut data_rng = substream(seed, Stream::Simulation);
    let kk = (s.k * s.k) as f64;
    s.alpha = gamma_sample(prior.a_alpha, prior.b_alpha, &mut data_rng);
    for f in 0..s.v.len() {
        s.ln_v[f] = ln_gamma_sample(s.alpha / kk, prior.c, &mut data_rng);
        s.v[f] = s.ln_v[f].exp();
    }
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let points = s.simulate_points(&mut data_rng);
        s.set_points(&points)?;
        s.sweep(false);
        out.push((s.alpha, s.total_intensity()));
    }
    Ok(out)
}

/// Pólya-urn sampler for the spatial density formulation with a prior on K.
/// Latent values `z` live in the domain; their grid cell picks the basis.
pub struct SpatialDensitySampler {
    prior: PriorConfig,
    domain: PolygonDomain,
    support: Vec<usize>,
    ln_prior: Vec<f64>,
    caches: Vec<Arc<BasisCache>>,
    tables: Vec<AxisTables>,
    current: usize,
    urn: Urn<Point>,
    alpha: f64,
    lambda: f64,
    tuner: AlphaTuner,
    rng: StreamRng,
    emit_rng: StreamRng,
    fresh: Vec<f64>,
    weights: Vec<f64>,
}

impl SpatialDensitySampler {
    pub fn new(
        points: &[Point],
        store: &CacheStore,
        prior: &PriorConfig,
        mcmc: &McmcConfig,
        chain: u32,
    ) -> Result<Self> {
        prior.validate()?;
        mcmc.validate()?;
        check_points(points, store.domain())?;
        let support = prior.k.support();
        store.warm(support.iter().copied())?;
        let caches = support.iter().map(|&k| store.get(k)).collect::<Result<Vec<_>>>()?;
        let tables: Vec<AxisTables> = {
            use rayon::prelude::*;
            support.par_iter().map(|&k| AxisTables::new(points, k)).collect()
        };
        let ln_prior = support.iter().map(|&k| prior.k.ln_mass(k)).collect();
        let median = prior.k.median();
        let current = support.iter().position(|&k| k == median).expect("median in support");
        let mut s = SpatialDensitySampler {
            prior: prior.clone(),
            domain: store.domain().clone(),
            support,
            ln_prior,
            caches,
            tables,
            current,
            urn: Urn::new(points.len()),
            alpha: prior.alpha_mean(),
            lambda: points.len() as f64 + 1.0,
            tuner: AlphaTuner::new(mcmc.alpha_proposal_sd, mcmc.adapt_alpha),
            rng: substream(mcmc.seed, Stream::Chain(chain)),
            emit_rng: substream(mcmc.seed, Stream::Emission(chain)),
            fresh: Vec::new(),
            weights: Vec::new(),
        };
        for i in 0..points.len() {
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

    /// One urn update for point `i`. Existing clusters weigh `n_c W*`, a
    /// fresh value `α q₀` with `q₀ = Σ_J W*_J |S*_J| / |D|`.
    fn reseat(&mut self, i: usize) {
        self.urn.detach(i);
        let cache = &self.caches[self.current];
        let tables = &self.tables[self.current];
        let k = cache.k();
        let b = cache.b();
        let area = cache.cell_area();
        let index_set = cache.index_set();
        let m = self.urn.clusters();

        self.fresh.clear();
        self.fresh
            .extend(index_set.iter().map(|&f| tables.phi(i, f) / b[f] * area[f]));
        let q0: f64 = self.fresh.iter().sum::<f64>() / cache.domain_area();

        self.weights.clear();
        self.weights.extend(
            (0..m).map(|c| self.urn.counts[c] as f64 * tables.phi(i, self.urn.cells[c]) / b[self.urn.cells[c]]),
        );
        self.weights.push(self.alpha * q0);
        let urn = &self.urn;
        let alpha = self.alpha;
        let domain_area = cache.domain_area();
        let choice = draw_index(
            &self.weights,
            || {
                let ln_fresh: Vec<f64> = index_set
                    .iter()
                    .map(|&f| tables.ln_phi(i, f) - b[f].ln() + area[f].ln())
                    .collect();
                let mut logs: Vec<f64> = (0..m)
                    .map(|c| {
                        let f = urn.cells[c];
                        (urn.counts[c] as f64).ln() + tables.ln_phi(i, f) - b[f].ln()
                    })
                    .collect();
                logs.push(alpha.ln() + crate::special::log_sum_exp(&ln_fresh) - domain_area.ln());
                logs
            },
            &mut self.rng,
        );
        if choice < m {
            self.urn.join(i, choice);
            return;
        }
        let pick = draw_index(
            &self.fresh,
            || {
                index_set
                    .iter()
                    .map(|&f| tables.ln_phi(i, f) - b[f].ln() + area[f].ln())
                    .collect()
            },
            &mut self.rng,
        );
        let flat = index_set[pick];
        let z = self
            .domain
            .sample_uniform_in(&cell_rect(flat, k), 1000, &mut self.rng)
            .expect("index-set cells have positive area");
        self.urn.open(i, z, flat_cell(z, k));
    }

    fn update_k(&mut self) {
        if self.support.len() == 1 {
            return;
        }
        let logs: Vec<f64> = self
            .tables
            .iter()
            .zip(&self.caches)
            .zip(&self.ln_prior)
            .map(|((tables, cache), lp)| {
                let k = cache.k();
                let b = cache.b();
                let cells: Vec<usize> = self.urn.values.iter().map(|&z| flat_cell(z, k)).collect();
                let ll: f64 = self
                    .urn
                    .assign
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| tables.ln_phi(i, cells[c]) - b[cells[c]].ln())
                    .sum();
                ll + lp
            })
            .collect();
        self.current = sample_log_weights(&logs, &mut self.rng).expect("finite K conditional");
        let k = self.k();
        self.urn.relabel_cells(|z| flat_cell(z, k));
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

impl Sampler for SpatialDensitySampler {
    fn formulation(&self) -> Formulation {
        Formulation::SpatialDensity
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
        let cache = &self.caches[self.current];
        let k = cache.k();
        let counts = self.urn.cell_counts(k * k);
        let scale = self.alpha / cache.domain_area();
        let conc: Vec<f64> = counts
            .iter()
            .zip(cache.cell_area())
            .map(|(&c, &a)| scale * a + c as f64)
            .collect();
        DrawRecord {
            iteration,
            formulation: Formulation::SpatialDensity,
            alpha: self.alpha,
            k,
            lambda: self.lambda,
            weights: Weights::Omega(dirichlet_sample(&conc, &mut self.emit_rng)),
            allocations: keep_allocations.then(|| Allocations::Z(self.urn.per_event())),
        }
    }

    fn tuner(&self) -> &AlphaTuner {
        &self.tuner
    }
}

pub fn fit_spatial_density(
    points: &[Point],
    store: &CacheStore,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
) -> Result<FitOutput> {
    fit_spatial_density_chain(points, store, prior, mcmc, 0)
}

pub fn fit_spatial_density_chain(
    points: &[Point],
    store: &CacheStore,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chain: u32,
) -> Result<FitOutput> {
    let mut s = SpatialDensitySampler::new(points, store, prior, mcmc, chain)?;
    Ok(run_chain(&mut s, mcmc, chain))
}
