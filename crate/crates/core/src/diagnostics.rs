//! Posterior summaries of draw sets and grid-based predictive residuals.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BernsteinBasis;
use crate::chains::{
    evaluate_density_1d, evaluate_density_2d, evaluate_intensity_1d, evaluate_intensity_2d,
    DrawRecord, Weights,
};
use crate::error::{Error, Result};
use crate::geometry::quadtree::{integrate_products, QuadratureSettings};
use crate::geometry::{axis_cell, CacheStore, Point, Rect, DEFAULT_MAX_DEPTH};
use crate::rng::{poisson_sample, substream, Stream};

/// Linearly interpolated quantile of ascending `sorted` (the `(n−1)q`
/// order-statistic position).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, q))
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Monte Carlo standard error of the mean of a correlated series by Geyer's
/// initial monotone sequence estimator: autocovariance pairs are summed
/// while positive and forced non-increasing.
pub fn mc_standard_error(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 4 {
        return Err(Error::EmptyDraws);
    }
    let acov = autocovariance(values);
    if !(acov[0] > 0.0) {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for pair in acov.chunks_exact(2) {
        let gamma = (pair[0] + pair[1]).min(last);
        if gamma <= 0.0 {
            break;
        }
        sum += gamma;
        last = gamma;
    }
    let variance = (2.0 * sum - acov[0]).max(acov[0]);
    Ok((variance / n as f64).sqrt())
}

/// Biased autocovariances at lags `0..n` by zero-padded FFT.
fn autocovariance(values: &[f64]) -> Vec<f64> {
    use rustfft::num_complex::Complex;
    let n = values.len();
    let centre = mean(values);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|v| Complex::new(v - centre, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / (size * n) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Intensity,
    Density,
}

/// Pointwise posterior summary over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub quantity: Quantity,
    /// One coordinate list per grid point: `[s]` or `[x, y]`.
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    pub draws: usize,
}

/// `values[d][p]` for draw `d` and point `p` summarized per point.
fn summarize_columns(
    quantity: Quantity,
    points: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
) -> GridSummary {
    let draws = values.len();
    let np = points.len();
    let cols: Vec<[f64; 4]> = (0..np)
        .into_par_iter()
        .map(|p| {
            let mut col: Vec<f64> = values.iter().map(|row| row[p]).collect();
            col.sort_by(f64::total_cmp);
            [
                mean(&col),
                quantile_sorted(&col, 0.05),
                quantile_sorted(&col, 0.5),
                quantile_sorted(&col, 0.95),
            ]
        })
        .collect();
    GridSummary {
        quantity,
        points,
        mean: cols.iter().map(|c| c[0]).collect(),
        q05: cols.iter().map(|c| c[1]).collect(),
        q50: cols.iter().map(|c| c[2]).collect(),
        q95: cols.iter().map(|c| c[3]).collect(),
        draws,
    }
}

pub fn summarize_grid_1d(draws: &[DrawRecord], grid: &[f64], quantity: Quantity) -> Result<GridSummary> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let values = draws
        .par_iter()
        .map(|d| match quantity {
            Quantity::Intensity => evaluate_intensity_1d(d, grid),
            Quantity::Density => evaluate_density_1d(d, grid),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_columns(quantity, grid.iter().map(|&s| vec![s]).collect(), values))
}

pub fn summarize_grid_2d(
    draws: &[DrawRecord],
    grid: &[Point],
    store: &CacheStore,
    quantity: Quantity,
) -> Result<GridSummary> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let ks: Vec<usize> = draws.iter().map(|d| d.k).collect();
    store.warm(ks)?;
    let values = draws
        .par_iter()
        .map(|d| {
            let cache = store.get(d.k)?;
            match quantity {
                Quantity::Intensity => evaluate_intensity_2d(d, grid, &cache),
                Quantity::Density => evaluate_density_2d(d, grid, &cache),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_columns(quantity, grid.iter().map(|p| vec![p.x, p.y]).collect(), values))
}

/// Regular `m × m` grid of cell centres over the unit square, row-major in x.
pub fn centre_grid(m: usize) -> Vec<Point> {
    let step = 1.0 / m as f64;
    (0..m)
        .flat_map(|i| (0..m).map(move |j| Point::new((i as f64 + 0.5) * step, (j as f64 + 0.5) * step)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalIntensitySummary {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    /// Monte Carlo standard error of the mean; `None` below four draws.
    pub se: Option<f64>,
    pub draws: usize,
}

pub fn total_intensity_summary(draws: &[DrawRecord]) -> Result<TotalIntensitySummary> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let lambda: Vec<f64> = draws.iter().map(|d| d.lambda).collect();
    let mut sorted = lambda.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(TotalIntensitySummary {
        mean: mean(&lambda),
        q025: quantile_sorted(&sorted, 0.025),
        q975: quantile_sorted(&sorted, 0.975),
        se: mc_standard_error(&lambda).ok(),
        draws: draws.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPosterior {
    /// `(K, Pr(K | data))`, ascending in K.
    pub table: Vec<(usize, f64)>,
    pub mode: usize,
    pub median: usize,
    /// Smallest and largest K of the greedy highest-probability set.
    pub interval: (usize, usize),
    pub level: f64,
}

/// Empirical K posterior. The interval collects K values in decreasing
/// probability until `level` is reached.
pub fn k_posterior_summary(draws: &[DrawRecord], level: f64) -> Result<KPosterior> {
    let first = draws.first().ok_or(Error::EmptyDraws)?;
    if !first.formulation.is_density() {
        return Err(Error::FixedK(first.formulation.name().into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in draws {
        *counts.entry(d.k).or_default() += 1;
    }
    let n = draws.len() as f64;
    let table: Vec<(usize, f64)> = counts.iter().map(|(&k, &c)| (k, c as f64 / n)).collect();
    // Ties go to the smaller K.
    let mode = table
        .iter()
        .fold((0, -1.0), |best, &(k, p)| if p > best.1 { (k, p) } else { best })
        .0;
    let mut acc = 0.0;
    let median = table
        .iter()
        .find(|(_, p)| {
            acc += p;
            acc >= 0.5
        })
        .map_or(mode, |&(k, _)| k);

    let mut by_prob = table.clone();
    by_prob.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let (mut lo, mut hi, mut mass) = (usize::MAX, 0, 0.0);
    for (k, p) in by_prob {
        lo = lo.min(k);
        hi = hi.max(k);
        mass += p;
        if mass >= level - 1e-12 {
            break;
        }
    }
    Ok(KPosterior {
        table,
        mode,
        median,
        interval: (lo, hi),
        level,
    })
}

/// One grid cell meeting the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCell {
    /// 1-based cell indices on the `m × m` grid.
    pub ix: usize,
    pub iy: usize,
    pub rect: Rect,
    /// `|B ∩ D|`.
    pub area: f64,
    pub n_obs: usize,
    /// Posterior mean of `∫_{B∩D} λ`.
    pub mean_mass: f64,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub m: usize,
    pub cells: Vec<ResidualCell>,
    /// Per draw: `Σ_B ∫_{B∩D} λ` and the draw's own `Λ_D`.
    pub mass_totals: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ResidualReport {
    /// Largest `|Σ_B mass − Λ_D| / Λ_D` over draws.
    pub fn worst_conservation_error(&self) -> f64 {
        self.mass_totals
            .iter()
            .zip(&self.lambda)
            .map(|(m, l)| (m - l).abs() / l.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Predictive residuals `N_pred(B) − N_obs(B)` on an `m × m` grid over the
/// unit square, keeping cells that meet the domain. `N_pred` for draw `d` is
/// Poisson with the draw's cell mass, drawn from the residual stream `d`.
pub fn predictive_residuals(
    draws: &[DrawRecord],
    points: &[Point],
    store: &CacheStore,
    m: usize,
    seed: u64,
) -> Result<ResidualReport> {
    if m == 0 {
        return Err(Error::InvalidConfig("residual grid needs m ≥ 1".into()));
    }
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if let Some(d) = draws.iter().find(|d| !d.formulation.is_spatial()) {
        return Err(Error::InvalidConfig(format!(
            "residuals need spatial draws, got {}",
            d.formulation.name()
        )));
    }
    let domain = store.domain();
    let settings = QuadratureSettings {
        tol: store.tol(),
        max_depth: DEFAULT_MAX_DEPTH,
    };

    let mut cells: Vec<(usize, usize, Rect, f64)> = Vec::new();
    for ix in 1..=m {
        for iy in 1..=m {
            let rect = Rect::grid_cell(ix, iy, m);
            let area = domain.clipped_area(&rect);
            if area > 0.0 {
                cells.push((ix, iy, rect, area));
            }
        }
    }
    let mut obs = vec![0usize; m * m];
    for p in points {
        obs[(axis_cell(p.x, m) - 1) * m + axis_cell(p.y, m) - 1] += 1;
    }

    // Per K: row c holds ∫_{B_c ∩ D} φ_J for every flat J.
    let ks: Vec<usize> = draws.iter().map(|d| d.k).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    store.warm(ks.iter().copied())?;
    let mut integrals: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for &k in &ks {
        let basis = BernsteinBasis::new(k);
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect();
        let rows = cells
            .par_iter()
            .map(|(_, _, rect, _)| integrate_products(domain, *rect, &basis, &basis, &pairs, settings))
            .collect::<Result<Vec<_>>>()?;
        integrals.insert(k, rows);
    }

    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = draws
        .par_iter()
        .enumerate()
        .map(|(idx, d)| {
            let cache = store.get(d.k)?;
            let coef: Vec<f64> = match &d.weights {
                Weights::V(v) => v.clone(),
                Weights::Omega(w) => w
                    .iter()
                    .zip(cache.b())
                    .map(|(w, b)| if *w > 0.0 { d.lambda * w / b } else { 0.0 })
                    .collect(),
            };
            let rows = &integrals[&d.k];
            let mut rng = substream(seed, Stream::Residuals(idx as u64));
            let mut masses = Vec::with_capacity(cells.len());
            let mut resid = Vec::with_capacity(cells.len());
            for (row, (ix, iy, _, _)) in rows.iter().zip(&cells) {
                let mass: f64 = row.iter().zip(&coef).map(|(a, c)| a * c).sum();
                let n_pred = poisson_sample(mass, &mut rng) as f64;
                masses.push(mass);
                resid.push(n_pred - obs[(ix - 1) * m + iy - 1] as f64);
            }
            Ok((masses, resid))
        })
        .collect::<Result<Vec<_>>>()?;

    let report_cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(ix, iy, rect, area))| {
            let mut r: Vec<f64> = per_draw.iter().map(|(_, res)| res[c]).collect();
            r.sort_by(f64::total_cmp);
            let mass: Vec<f64> = per_draw.iter().map(|(ms, _)| ms[c]).collect();
            ResidualCell {
                ix,
                iy,
                rect,
                area,
                n_obs: obs[(ix - 1) * m + iy - 1],
                mean_mass: mean(&mass),
                mean: mean(&r),
                q05: quantile_sorted(&r, 0.05),
                q95: quantile_sorted(&r, 0.95),
            }
        })
        .collect();
    Ok(ResidualReport {
        m,
        cells: report_cells,
        mass_totals: per_draw.iter().map(|(ms, _)| ms.iter().sum()).collect(),
        lambda: draws.iter().map(|d| d.lambda).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::Formulation;
    use crate::geometry::{PolygonDomain, DEFAULT_TOL};
    use std::sync::Arc;

    fn draw(formulation: Formulation, k: usize, lambda: f64, weights: Weights) -> DrawRecord {
        DrawRecord {
            iteration: 0,
            formulation,
            alpha: 1.0,
            k,
            lambda,
            weights,
            allocations: None,
        }
    }

    #[test]
    fn quantiles_interpolate_order_statistics() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        // Position 0.5 · 3 = 1.5 between 2 and 3.
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert!(matches!(quantile(&[], 0.5), Err(Error::EmptyDraws)));
    }

    #[test]
    fn mc_error_of_iid_series_is_near_naive_se() {
        use rand::Rng;
        let mut rng = substream(1, Stream::Simulation);
        let v: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>()).collect();
        let se = mc_standard_error(&v).unwrap();
        let naive = (1.0 / 12.0 / 40_000f64).sqrt();
        assert!((se / naive - 1.0).abs() < 0.1, "{se} vs {naive}");
    }

    #[test]
    fn mc_error_of_ar1_series_matches_long_run_variance() {
        // The mean of x_t = ρ x_{t-1} + e_t has variance 1 / {n (1 − ρ)²}.
        let (rho, n) = (0.95, 200_000);
        let mut rng = substream(2, Stream::Simulation);
        let mut x = 0.0;
        let v: Vec<f64> = (0..n)
            .map(|_| {
                x = rho * x + crate::rng::normal_sample(&mut rng);
                x
            })
            .collect();
        let exact = (1.0 / (n as f64 * (1.0 - rho) * (1.0 - rho))).sqrt();
        let se = mc_standard_error(&v).unwrap();
        assert!((se / exact - 1.0).abs() < 0.15, "{se} vs {exact}");
        assert_eq!(mc_standard_error(&[2.0; 10]).unwrap(), 0.0);
    }

    #[test]
    fn single_and_constant_draws_give_zero_width() {
        let d = draw(Formulation::TemporalIntensity, 3, 6.0, Weights::V(vec![1.0, 2.0, 3.0]));
        let grid = [0.1, 0.5, 0.9];
        let one = summarize_grid_1d(std::slice::from_ref(&d), &grid, Quantity::Intensity).unwrap();
        let direct = evaluate_intensity_1d(&d, &grid).unwrap();
        assert_eq!(one.mean, direct);
        assert_eq!(one.q05, one.q95);
        let many = vec![d.clone(); 7];
        let s = summarize_grid_1d(&many, &grid, Quantity::Density).unwrap();
        for i in 0..3 {
            assert!((s.q95[i] - s.q05[i]).abs() < 1e-15);
            assert!((s.mean[i] - direct[i] / 6.0).abs() < 1e-12);
        }
        assert!(matches!(summarize_grid_1d(&[], &grid, Quantity::Intensity), Err(Error::EmptyDraws)));
    }

    #[test]
    fn constant_lambda_summary() {
        let d = draw(Formulation::TemporalDensity, 1, 5.0, Weights::Omega(vec![1.0]));
        let s = total_intensity_summary(&vec![d; 10]).unwrap();
        assert_eq!((s.mean, s.q025, s.q975), (5.0, 5.0, 5.0));
    }

    #[test]
    fn k_posterior_table_mode_and_interval() {
        let mk = |k| draw(Formulation::SpatialDensity, k, 1.0, Weights::Omega(vec![]));
        let all7: Vec<DrawRecord> = (0..5).map(|_| mk(7)).collect();
        let p = k_posterior_summary(&all7, 0.95).unwrap();
        assert_eq!(p.table, vec![(7, 1.0)]);
        assert_eq!((p.mode, p.median, p.interval), (7, 7, (7, 7)));

        let mixed: Vec<DrawRecord> = [1, 2, 1, 2, 3, 1, 1, 2, 2, 5].iter().map(|&k| mk(k)).collect();
        let p = k_posterior_summary(&mixed, 0.85).unwrap();
        assert_eq!(p.table, vec![(1, 0.4), (2, 0.4), (3, 0.1), (5, 0.1)]);
        assert_eq!(p.mode, 1);
        assert_eq!(p.median, 2);
        assert_eq!(p.interval, (1, 3));

        let fixed = vec![draw(Formulation::TemporalIntensity, 4, 1.0, Weights::V(vec![1.0; 4]))];
        assert!(matches!(k_posterior_summary(&fixed, 0.95), Err(Error::FixedK(_))));
    }

    #[test]
    fn single_cell_residual_is_poisson_minus_count() {
        let store = CacheStore::new(Arc::new(PolygonDomain::unit_square()), DEFAULT_TOL);
        let v = vec![2.0, 4.0, 6.0, 8.0];
        // B = 1 on the unit square, so Λ_D = Σ V = 20.
        let d = draw(Formulation::SpatialIntensity, 2, 20.0, Weights::V(v));
        let pts = [Point::new(0.2, 0.3), Point::new(0.7, 0.1)];
        let r = predictive_residuals(&[d.clone()], &pts, &store, 1, 9).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!((r.mass_totals[0] - 20.0).abs() < 1e-12);
        let mut rng = substream(9, Stream::Residuals(0));
        let expect = poisson_sample(20.0, &mut rng) as f64 - 2.0;
        assert_eq!(r.cells[0].mean, expect);
        assert_eq!(r.cells[0].n_obs, 2);
    }

    #[test]
    fn triangle_residual_cells_and_conservation() {
        let domain = PolygonDomain::example_triangle();
        let store = CacheStore::new(Arc::new(domain.clone()), DEFAULT_TOL);
        let cache = store.get(4).unwrap();
        let v: Vec<f64> = (0..16).map(|i| 1.0 + i as f64).collect();
        let lambda: f64 = v.iter().zip(cache.b()).map(|(a, b)| a * b).sum();
        let omega: Vec<f64> = (0..16)
            .map(|f| if cache.in_index_set(f) { cache.cell_area()[f] } else { 0.0 })
            .collect();
        let total: f64 = omega.iter().sum();
        let omega: Vec<f64> = omega.iter().map(|w| w / total).collect();
        let draws = [
            draw(Formulation::SpatialIntensity, 4, lambda, Weights::V(v)),
            draw(Formulation::SpatialDensity, 4, 123.0, Weights::Omega(omega)),
        ];
        let r = predictive_residuals(&draws, &[Point::new(0.3, 0.3)], &store, 20, 1).unwrap();
        let expected = (1..=20)
            .flat_map(|i| (1..=20).map(move |j| (i, j)))
            .filter(|&(i, j)| domain.clipped_area(&Rect::grid_cell(i, j, 20)) > 0.0)
            .count();
        assert_eq!(r.cells.len(), expected);
        assert!(expected < 400);
        assert!(r.worst_conservation_error() < 1e-8, "{}", r.worst_conservation_error());
        assert_eq!(r.cells.iter().map(|c| c.n_obs).sum::<usize>(), 1);
        assert!(matches!(
            predictive_residuals(&draws, &[], &store, 0, 1),
            Err(Error::InvalidConfig(_))
        ));
    }
}
