//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! Exits non-zero on a failure only when `NHPP_ACCEPTANCE_STRICT` is set.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nhpp_core::basis::BernsteinBasis;
use nhpp_core::chains::{
    evaluate_intensity_2d, fit_chain, geweke_temporal_intensity, DrawRecord, Formulation, KPrior,
    McmcConfig, PriorConfig, Weights,
};
use nhpp_core::diagnostics::{
    mc_standard_error, centre_grid, k_posterior_summary, mean, predictive_residuals,
};
use nhpp_core::elicitation::{b_star, choose_c, vmax_quantile, ElicitationInput};
use nhpp_core::geometry::build_basis_cache;
use nhpp_core::simulate::{simulate_nhpp, BetaTerm2d, Truth, TruthSpec};
use nhpp_core::{CacheStore, Point, PointPattern, PolygonDomain, Rect, Ring};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::beta::beta_reg;

const SEED: u64 = 20_261_014;
const TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// 1. Analytic part of the K table.
fn table_b_star() -> Outcome {
    let want = [(20, 7.56), (30, 11.23), (50, 18.58), (100, 36.97)];
    let got: Vec<(usize, f64)> = want.iter().map(|&(k, _)| (k, b_star(k).unwrap())).collect();
    let pass = want.iter().zip(&got).all(|(w, g)| (w.1 - g.1).abs() <= 0.01);
    outcome(pass, format!("b*(K) = {got:.3?}, tolerance 0.01"))
}

// 2. Monte Carlo part of the K table, with C = 0.023.
fn table_vmax() -> Outcome {
    let want = [(20, 232.34), (30, 208.18), (50, 181.36), (100, 167.38)];
    let mut rows = Vec::new();
    let mut pass = true;
    for &(k, w) in &want {
        let q = vmax_quantile(k, 2.53, 0.1, 0.023, 0.9, 200_000, SEED).unwrap();
        let rel = (q.value - w) / w;
        pass &= rel.abs() <= 0.05;
        rows.push(format!("K={k}: {:.2}±{:.2} vs {w} ({:+.1}%)", q.value, q.se, 100.0 * rel));
    }
    outcome(pass, format!("{}; tolerance 5%", rows.join(", ")))
}

// 3. Choosing C and the α prior from the two intensity guesses.
fn elicitation_round_trip() -> Outcome {
    let input = ElicitationInput {
        total: 1000.0,
        average: 1100.0,
        peak: None,
        b_alpha: 0.1,
        quantile: 0.9,
    };
    match choose_c(&input, 200_000, SEED) {
        Ok(r) => outcome(
            (0.020..=0.026).contains(&r.c) && (2.2..=2.9).contains(&r.a_alpha),
            format!(
                "C = {:.4} (want [0.020, 0.026]), a_alpha = {:.3} (want [2.2, 2.9]), median Λ = {:.1}",
                r.c, r.a_alpha, r.median
            ),
        ),
        Err(e) => outcome(false, format!("choose_c failed: {e}")),
    }
}

// 4. Prior-mean identities.
fn prior_means() -> Outcome {
    let mut worst = 0.0f64;
    for k in [5, 20, 50, 100] {
        let basis = BernsteinBasis::new(k);
        let mut out = vec![0.0; k];
        for i in 1..=99 {
            basis.eval_all(i as f64 / 100.0, &mut out);
            worst = worst.max((out.iter().sum::<f64>() / k as f64 - 1.0).abs());
        }
    }
    let part_a = worst <= 1e-12;

    // Irregular-domain intensity model: α ~ Ga(2, 0.01), V ~ Ga(α/K², C).
    let (a_alpha, b_alpha, c, k) = (2.0, 0.01, 0.01, 20usize);
    let domain = PolygonDomain::example_triangle();
    let cache = build_basis_cache(&domain, k, TOL).unwrap();
    let corners = [Point::new(0.01, 0.01), Point::new(0.2, 0.9), Point::new(0.9, 0.1)];
    let steps = [0.08, 0.16, 0.24, 0.32, 0.40];
    let points: Vec<Point> = steps
        .iter()
        .flat_map(|&u| steps.iter().map(move |&w| (u, w)))
        .map(|(u, w)| {
            Point::new(
                corners[0].x + u * (corners[1].x - corners[0].x) + w * (corners[2].x - corners[0].x),
                corners[0].y + u * (corners[1].y - corners[0].y) + w * (corners[2].y - corners[0].y),
            )
        })
        .collect();
    let mut rng = ChaCha20Rng::seed_from_u64(SEED ^ 4);
    let alpha_prior = Gamma::new(a_alpha, 1.0 / b_alpha).unwrap();
    let reps = 10_000;
    let mut values = vec![Vec::with_capacity(reps); points.len()];
    for _ in 0..reps {
        let alpha: f64 = alpha_prior.sample(&mut rng);
        let v_prior = Gamma::new(alpha / (k * k) as f64, 1.0 / c).unwrap();
        let v: Vec<f64> = (0..k * k).map(|_| v_prior.sample(&mut rng)).collect();
        let lambda = v.iter().zip(cache.b()).map(|(v, b)| v * b).sum();
        let draw = DrawRecord {
            iteration: 0,
            formulation: Formulation::SpatialIntensity,
            alpha,
            k,
            lambda,
            weights: Weights::V(v),
            allocations: None,
        };
        for (col, x) in values.iter_mut().zip(evaluate_intensity_2d(&draw, &points, &cache).unwrap()) {
            col.push(x);
        }
    }
    let target = a_alpha / b_alpha / c;
    let z: Vec<f64> = values
        .iter()
        .map(|col| {
            let m = mean(col);
            let sd = (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            (m - target) / (sd / (reps as f64).sqrt())
        })
        .collect();
    let worst_z = z.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    outcome(
        part_a && worst_z <= 3.0,
        format!(
            "(a) max |K⁻¹Σbe − 1| = {worst:.1e} (tol 1e-12); (b) max |z| over 25 triangle points = {worst_z:.2} (tol 3), E(α)/C = {target}"
        ),
    )
}

// 5. Structural recovery of the beta-mixture truth.
fn structural_recovery() -> Outcome {
    let truth = Truth::builtin("beta-mixture-1d").unwrap();
    let pattern = simulate_nhpp(&truth, None, SEED + 5).unwrap();
    let n = pattern.len();
    let fit = |k: usize| {
        let prior = PriorConfig {
            c: 0.023,
            a_alpha: 2.53,
            b_alpha: 0.1,
            k: KPrior::Fixed { value: k },
        };
        let mut mcmc = McmcConfig::new(10_000, 2_000, 1, SEED + 5);
        mcmc.keep_allocations = false;
        let out = fit_chain(Formulation::TemporalIntensity, &pattern, None, &prior, &mcmc, 0).unwrap();
        let mut v = vec![0.0; k];
        for d in &out.draws {
            for (acc, x) in v.iter_mut().zip(d.weights.values()) {
                *acc += x / out.draws.len() as f64;
            }
        }
        v
    };
    let v20 = fit(20);
    let mut order: Vec<usize> = (0..20).collect();
    order.sort_by(|&a, &b| v20[b].total_cmp(&v20[a]));
    let mut top = [order[0] + 1, order[1] + 1];
    top.sort_unstable();
    let part_a = top == [3, 13];

    // Mode region of a component: where its density is at least half its peak.
    let half_max = |a: f64, b: f64| {
        let ln_pdf = |s: f64| (a - 1.0) * s.ln() + (b - 1.0) * (1.0 - s).ln();
        let mode = (a - 1.0) / (a + b - 2.0);
        let level = ln_pdf(mode) - 2f64.ln();
        let solve = |mut lo: f64, mut hi: f64, rising: bool| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (ln_pdf(mid) < level) == rising {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        (solve(1e-12, mode, true), solve(mode, 1.0 - 1e-12, false))
    };
    let regions = [half_max(3.0, 18.0), half_max(13.0, 8.0)];
    let v40 = fit(40);
    let total: f64 = v40.iter().sum();
    let inside: f64 = v40
        .iter()
        .enumerate()
        .filter(|(j, _)| {
            let m = *j as f64 / 39.0;
            regions.iter().any(|(lo, hi)| (*lo..=*hi).contains(&m))
        })
        .map(|(_, v)| v)
        .sum();
    let share = inside / total;
    outcome(
        part_a && share >= 0.8,
        format!(
            "n = {n}; K=20 top indices {top:?} (want [3, 13]); K=40 mass share in half-max regions {:.3?} = {share:.3} (want ≥ 0.8)",
            regions
        ),
    )
}

struct TriangleRun {
    points: Vec<Point>,
    store: CacheStore,
    draws: Vec<DrawRecord>,
}

fn pooled_chains(
    formulation: Formulation,
    pattern: &PointPattern,
    store: Option<&CacheStore>,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    chains: u32,
) -> Vec<DrawRecord> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || fit_chain(formulation, pattern, store, prior, mcmc, c).unwrap()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap().draws).collect()
    })
}

fn triangle_run() -> TriangleRun {
    let truth = Truth::builtin("triangle-bimodal").unwrap();
    let pattern = simulate_nhpp(&truth, None, SEED + 6).unwrap();
    let store = CacheStore::new(Arc::new(truth.domain().unwrap().clone()), TOL);
    let prior = PriorConfig {
        c: 0.01,
        a_alpha: 2.0,
        b_alpha: 0.01,
        k: KPrior::DiscreteUniform { min: 15, max: 25 },
    };
    let mut mcmc = McmcConfig::new(20_000, 4_000, 1, SEED + 6);
    mcmc.keep_allocations = false;
    let draws = pooled_chains(Formulation::SpatialDensity, &pattern, Some(&store), &prior, &mcmc, 4);
    TriangleRun {
        points: pattern.as_spatial().unwrap().to_vec(),
        store,
        draws,
    }
}

// 6. Triangle experiment with random K.
fn triangle_experiment(run: &TriangleRun) -> Outcome {
    let n = run.points.len() as f64;
    let lambda = mean(&run.draws.iter().map(|d| d.lambda).collect::<Vec<_>>());
    let k = k_posterior_summary(&run.draws, 0.95).unwrap();
    let part_lambda = (lambda - n).abs() <= 3.0 * n.sqrt();
    let part_mode = (19..=22).contains(&k.mode);
    let part_interval = k.interval.0 >= 15 && k.interval.1 <= 25;
    outcome(
        part_lambda && part_mode && part_interval,
        format!(
            "n = {n}; posterior mean Λ_D = {lambda:.1} (want n ± {:.1}); K mode {} (want [19, 22]), median {}, 95% interval {:?}",
            3.0 * n.sqrt(),
            k.mode,
            k.median,
            k.interval
        ),
    )
}

// 7. Both spatial formulations on the unit square with fixed K.
fn unit_square_equivalence() -> Outcome {
    let spec = TruthSpec::BetaMixture2d {
        total: 500.0,
        components: vec![
            BetaTerm2d { weight: 0.6, ax: 3.0, bx: 7.0, ay: 4.0, by: 6.0 },
            BetaTerm2d { weight: 0.4, ax: 8.0, bx: 3.0, ay: 7.0, by: 3.0 },
        ],
    };
    let truth = Truth::new(spec, Some(PolygonDomain::unit_square())).unwrap();
    let pattern = simulate_nhpp(&truth, None, SEED + 7).unwrap();
    let store = CacheStore::new(Arc::new(PolygonDomain::unit_square()), TOL);
    let prior = PriorConfig {
        c: 0.01,
        a_alpha: 2.0,
        b_alpha: 0.1,
        k: KPrior::Fixed { value: 15 },
    };
    let mut mcmc = McmcConfig::new(20_000, 2_000, 1, SEED + 7);
    mcmc.keep_allocations = false;
    let grid = centre_grid(10);
    let cache = store.get(15).unwrap();
    let columns = |f: Formulation| {
        let out = fit_chain(f, &pattern, Some(&store), &prior, &mcmc, 0).unwrap();
        let mut cols = vec![Vec::with_capacity(out.draws.len()); grid.len()];
        for d in &out.draws {
            for (col, x) in cols.iter_mut().zip(evaluate_intensity_2d(d, &grid, &cache).unwrap()) {
                col.push(x);
            }
        }
        cols
    };
    let (a, b) = std::thread::scope(|s| {
        let ha = s.spawn(|| columns(Formulation::SpatialIntensity));
        let hb = s.spawn(|| columns(Formulation::SpatialDensity));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    let agree = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| {
            let se = (mc_standard_error(x).unwrap().powi(2) + mc_standard_error(y).unwrap().powi(2)).sqrt();
            (mean(x) - mean(y)).abs() <= 3.0 * se
        })
        .count();
    outcome(
        agree as f64 >= 0.95 * grid.len() as f64,
        format!("n = {}; {agree}/100 grid points agree within 3 combined MC SEs (want ≥ 95)", pattern.len()),
    )
}

// 8. Conservation identities on the triangle data.
fn conservation(run: &TriangleRun) -> Outcome {
    let prior = PriorConfig {
        c: 0.01,
        a_alpha: 2.0,
        b_alpha: 0.01,
        k: KPrior::Fixed { value: 20 },
    };
    let mut mcmc = McmcConfig::new(3_000, 500, 1, SEED + 8);
    mcmc.keep_allocations = false;
    let pattern = PointPattern::Spatial(run.points.clone());
    let out = fit_chain(Formulation::SpatialIntensity, &pattern, Some(&run.store), &prior, &mcmc, 0).unwrap();
    let cache = run.store.get(20).unwrap();
    let worst_vb = out
        .draws
        .iter()
        .map(|d| {
            let sum: f64 = d.weights.values().iter().zip(cache.b()).map(|(v, b)| v * b).sum();
            (sum - d.lambda).abs() / d.lambda
        })
        .fold(0.0, f64::max);
    let report = predictive_residuals(&run.draws, &run.points, &run.store, 10, SEED + 8).unwrap();
    let worst_cells = report.worst_conservation_error();
    outcome(
        worst_vb <= 1e-8 && worst_cells <= 1e-8,
        format!(
            "max rel |ΣVB − Λ_D| = {worst_vb:.1e} over {} intensity draws; max rel |Σ cell mass − Λ_D| = {worst_cells:.1e} over {} density draws (tol 1e-8)",
            out.draws.len(),
            run.draws.len()
        ),
    )
}

fn shoelace(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
}

// 9. Geometry oracles.
fn geometry_oracles() -> Outcome {
    let increment = |j: usize, k: usize, lo: f64, hi: f64| {
        let (a, b) = (j as f64, (k - j + 1) as f64);
        let cdf = |x: f64| if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { beta_reg(a, b, x) };
        cdf(hi) - cdf(lo)
    };
    let mut worst_rect = 0.0f64;
    for r in [Rect::new(0.1, 0.2, 0.6, 0.7), Rect::new(0.0, 0.0, 0.35, 1.0), Rect::new(0.42, 0.05, 0.97, 0.61)] {
        let domain = PolygonDomain::rectangle(r).unwrap();
        for k in [1, 5, 12] {
            let cache = build_basis_cache(&domain, k, TOL).unwrap();
            for kx in 1..=k {
                for ky in 1..=k {
                    let exact = increment(kx, k, r.x0, r.x1) * increment(ky, k, r.y0, r.y1);
                    worst_rect = worst_rect.max((cache.b()[(kx - 1) * k + ky - 1] - exact).abs());
                }
            }
        }
    }
    let ring = |radius: f64, sides: usize| -> Vec<(f64, f64)> {
        (0..sides)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / sides as f64;
                (0.5 + radius * t.cos(), 0.5 + radius * t.sin())
            })
            .collect()
    };
    let (outer, inner) = (ring(0.4, 64), ring(0.2, 48));
    let annulus = PolygonDomain::new(vec![Ring::outer(&outer), Ring::hole(&inner)]).unwrap();
    let triangle_pts = [(0.01, 0.01), (0.2, 0.9), (0.9, 0.1)];
    let domains = [
        ("triangle", PolygonDomain::example_triangle(), shoelace(&triangle_pts)),
        ("annulus", annulus, shoelace(&outer) - shoelace(&inner)),
    ];
    let mut worst_sum = 0.0f64;
    for (_, d, area) in &domains {
        for k in [5, 10, 20] {
            let cache = build_basis_cache(d, k, TOL).unwrap();
            let b_sum = cache.b().iter().sum::<f64>() / (k * k) as f64;
            let cell_sum: f64 = cache.cell_area().iter().sum();
            worst_sum = worst_sum.max((b_sum - area).abs()).max((cell_sum - area).abs());
        }
    }
    outcome(
        worst_rect <= 1e-10 && worst_sum <= 1e-6,
        format!("rectangles vs incomplete beta: {worst_rect:.1e} (tol 1e-10); ΣB/K² and Σ|S*| vs |D| on triangle and annulus: {worst_sum:.1e} (tol 1e-6)"),
    )
}

// 10. Successive-substitution prior reproduction for the temporal intensity sampler.
fn geweke() -> Outcome {
    let prior = PriorConfig {
        c: 0.05,
        a_alpha: 2.0,
        b_alpha: 1.0,
        k: KPrior::Fixed { value: 10 },
    };
    let trace = geweke_temporal_intensity(&prior, 20_000, SEED + 10).unwrap();
    let alpha: Vec<f64> = trace.iter().map(|t| t.0).collect();
    let lambda: Vec<f64> = trace.iter().map(|t| t.1).collect();
    let (ea, el) = (prior.alpha_mean(), prior.alpha_mean() / prior.c);
    let za = (mean(&alpha) - ea) / mc_standard_error(&alpha).unwrap();
    let zl = (mean(&lambda) - el) / mc_standard_error(&lambda).unwrap();
    outcome(
        za.abs() <= 3.0 && zl.abs() <= 3.0,
        format!(
            "mean α = {:.3} (prior {ea}, z = {za:.2}); mean Λ = {:.2} (prior {el}, z = {zl:.2}); tolerance 3 MC standard errors",
            mean(&alpha),
            mean(&lambda)
        ),
    )
}

// 11. Random-K fit of the logit-normal truth.
fn logit_normal_k() -> Outcome {
    let truth = Truth::builtin("logit-normal-mixture-1d").unwrap();
    let pattern = simulate_nhpp(&truth, None, SEED + 11).unwrap();
    let prior = PriorConfig {
        c: 0.023,
        a_alpha: 2.53,
        b_alpha: 0.1,
        k: KPrior::DiscreteUniform { min: 20, max: 60 },
    };
    let mut mcmc = McmcConfig::new(20_000, 4_000, 1, SEED + 11);
    mcmc.keep_allocations = false;
    let draws = pooled_chains(Formulation::TemporalDensity, &pattern, None, &prior, &mcmc, 4);
    let k = k_posterior_summary(&draws, 0.95).unwrap();
    outcome(
        (28..=46).contains(&k.median),
        format!(
            "n = {}; posterior median K = {} (want [28, 46]), mode {}, 95% interval {:?}",
            pattern.len(),
            k.median,
            k.mode,
            k.interval
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome, f64)> = std::thread::scope(|s| {
        let timed = |f: fn() -> Outcome| {
            move || {
                let t = Instant::now();
                let o = f();
                (o, t.elapsed().as_secs_f64())
            }
        };
        let jobs: Vec<(usize, std::thread::ScopedJoinHandle<'_, (Outcome, f64)>)> = vec![
            (1, s.spawn(timed(table_b_star))),
            (2, s.spawn(timed(table_vmax))),
            (3, s.spawn(timed(elicitation_round_trip))),
            (4, s.spawn(timed(prior_means))),
            (5, s.spawn(timed(structural_recovery))),
            (7, s.spawn(timed(unit_square_equivalence))),
            (9, s.spawn(timed(geometry_oracles))),
            (10, s.spawn(timed(geweke))),
            (11, s.spawn(timed(logit_normal_k))),
        ];
        let triangle = s.spawn(|| {
            let t = Instant::now();
            let run = triangle_run();
            let fit_secs = t.elapsed().as_secs_f64();
            let six = triangle_experiment(&run);
            let t8 = Instant::now();
            let eight = conservation(&run);
            vec![(6, six, fit_secs), (8, eight, t8.elapsed().as_secs_f64())]
        });
        let mut all: Vec<(usize, Outcome, f64)> = jobs
            .into_iter()
            .map(|(i, h)| {
                let (o, secs) = h.join().unwrap();
                (i, o, secs)
            })
            .collect();
        all.extend(triangle.join().unwrap());
        all
    });
    results.sort_by_key(|r| r.0);
    let failed = results.iter().filter(|r| !r.1.pass).count();
    for (i, o, secs) in &results {
        println!(
            "{} criterion {i:>2}: {} [{secs:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 && std::env::var_os("NHPP_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
