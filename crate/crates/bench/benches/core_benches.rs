use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use nhpp_core::chains::{fit_chain, Formulation, KPrior, McmcConfig, PriorConfig};
use nhpp_core::elicitation::vmax_quantile;
use nhpp_core::geometry::build_basis_cache;
use nhpp_core::simulate::simulate_nhpp;
use nhpp_core::{CacheStore, PolygonDomain, Truth};

const TOL: f64 = 1e-8;

fn basis_cache(c: &mut Criterion) {
    let triangle = PolygonDomain::example_triangle();
    c.bench_function("basis_cache_triangle_k20", |b| {
        b.iter(|| build_basis_cache(black_box(&triangle), 20, TOL).unwrap())
    });
}

fn samplers(c: &mut Criterion) {
    let temporal = simulate_nhpp(&Truth::builtin("beta-mixture-1d").unwrap(), None, 1).unwrap();
    let spatial = simulate_nhpp(&Truth::builtin("triangle-bimodal").unwrap(), None, 2).unwrap();
    let store = CacheStore::new(Arc::new(PolygonDomain::example_triangle()), TOL);
    let mut mcmc = McmcConfig::new(200, 50, 1, 3);
    mcmc.keep_allocations = false;
    let fixed = PriorConfig {
        c: 0.023,
        a_alpha: 2.53,
        b_alpha: 0.1,
        k: KPrior::Fixed { value: 20 },
    };
    let random = PriorConfig {
        c: 0.01,
        a_alpha: 2.0,
        b_alpha: 0.01,
        k: KPrior::DiscreteUniform { min: 15, max: 25 },
    };
    // Fill the cache store once so the benchmark times sweeps only.
    for k in 15..=25 {
        store.get(k).unwrap();
    }
    let mut group = c.benchmark_group("samplers_200_sweeps");
    group.sample_size(10);
    group.bench_function("temporal_intensity_k20", |b| {
        b.iter(|| fit_chain(Formulation::TemporalIntensity, &temporal, None, &fixed, &mcmc, 0).unwrap())
    });
    group.bench_function("spatial_intensity_k20", |b| {
        b.iter(|| fit_chain(Formulation::SpatialIntensity, &spatial, Some(&store), &fixed, &mcmc, 0).unwrap())
    });
    group.bench_function("spatial_density_k15_25", |b| {
        b.iter(|| fit_chain(Formulation::SpatialDensity, &spatial, Some(&store), &random, &mcmc, 0).unwrap())
    });
    group.finish();
}

fn elicitation(c: &mut Criterion) {
    let mut group = c.benchmark_group("elicitation");
    group.sample_size(10);
    group.bench_function("vmax_quantile_k50_mc20000", |b| {
        b.iter(|| vmax_quantile(50, 2.53, 0.1, 0.023, 0.9, 20_000, 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, basis_cache, samplers, elicitation);
criterion_main!(benches);
