//! Point-pattern generation by thinning, and the built-in truth intensities.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::geometry::quadtree::{integrate_products, FactorFamily, QuadratureSettings};
use crate::geometry::{Point, PolygonDomain, DEFAULT_MAX_DEPTH, DEFAULT_TOL};
use crate::pattern::PointPattern;
use crate::rng::{poisson_sample, substream, Stream};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTerm {
    pub weight: f64,
    pub a: f64,
    pub b: f64,
}

/// `weight · N(logit s | mean, sd²) / (s (1 − s))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitNormalTerm {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Product of independent per-axis factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTerm2d {
    pub weight: f64,
    pub ax: f64,
    pub bx: f64,
    pub ay: f64,
    pub by: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitNormalTerm2d {
    pub weight: f64,
    pub mean_x: f64,
    pub sd_x: f64,
    pub mean_y: f64,
    pub sd_y: f64,
}

/// A known intensity. 1-D mixtures are intensities on `(0, 1)` whose
/// weights are expected counts. 2-D mixtures are densities on the unit
/// square, truncated to the domain and scaled to `total` expected points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthSpec {
    #[serde(rename = "beta-mixture-1d")]
    BetaMixture1d { components: Vec<BetaTerm> },
    #[serde(rename = "logit-normal-mixture-1d")]
    LogitNormalMixture1d { components: Vec<LogitNormalTerm> },
    #[serde(rename = "beta-mixture-2d")]
    BetaMixture2d { total: f64, components: Vec<BetaTerm2d> },
    #[serde(rename = "logit-normal-mixture-2d")]
    LogitNormalMixture2d { total: f64, components: Vec<LogitNormalTerm2d> },
    /// Constant intensity per unit length or area.
    Homogeneous {
        rate: f64,
        #[serde(default)]
        spatial: bool,
    },
}

pub const BUILTIN_TRUTHS: [&str; 5] = [
    "beta-mixture-1d",
    "logit-normal-mixture-1d",
    "triangle-bimodal",
    "homogeneous-1d",
    "homogeneous-2d",
];

/// A built-in truth and its window.
pub fn builtin_truth(name: &str) -> Result<(TruthSpec, Option<PolygonDomain>)> {
    let beta = |weight, a, b| BetaTerm { weight, a, b };
    let ln = |weight, mean, sd| LogitNormalTerm { weight, mean, sd };
    Ok(match name {
        "beta-mixture-1d" => (
            TruthSpec::BetaMixture1d {
                components: vec![beta(700.0, 3.0, 18.0), beta(300.0, 13.0, 8.0)],
            },
            None,
        ),
        "logit-normal-mixture-1d" => (
            TruthSpec::LogitNormalMixture1d {
                components: vec![ln(400.0, -2.2, 1.0), ln(600.0, 0.3, 0.8)],
            },
            None,
        ),
        "triangle-bimodal" => (
            TruthSpec::BetaMixture2d {
                total: 300.0,
                components: vec![
                    BetaTerm2d { weight: 0.7, ax: 4.0, bx: 17.0, ay: 10.0, by: 11.0 },
                    BetaTerm2d { weight: 0.3, ax: 12.0, bx: 9.0, ay: 4.0, by: 17.0 },
                ],
            },
            Some(PolygonDomain::example_triangle()),
        ),
        "homogeneous-1d" => (TruthSpec::Homogeneous { rate: 200.0, spatial: false }, None),
        "homogeneous-2d" => (
            TruthSpec::Homogeneous { rate: 200.0, spatial: true },
            Some(PolygonDomain::unit_square()),
        ),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown builtin truth '{other}'; choose one of: {}",
                BUILTIN_TRUTHS.join(", ")
            )))
        }
    })
}

fn beta_pdf(s: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    let term = |e: f64, v: f64| if e == 0.0 { 0.0 } else { e * v.ln() };
    (term(a - 1.0, s) + term(b - 1.0, 1.0 - s) - ln_beta(a, b)).exp()
}

/// Largest value of the beta density; requires `a, b ≥ 1`.
fn beta_peak(a: f64, b: f64) -> f64 {
    if a == 1.0 && b == 1.0 {
        return 1.0;
    }
    beta_pdf((a - 1.0) / (a + b - 2.0), a, b)
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

fn logit_normal_pdf(s: f64, mean: f64, sd: f64) -> f64 {
    if !(s > 0.0 && s < 1.0) {
        return 0.0;
    }
    let z = (logit(s) - mean) / sd;
    (-0.5 * z * z).exp() / (sd * SQRT_2PI * s * (1.0 - s))
}

/// Stationary points of the logit-normal density: roots on `(0, 1)` of
/// `logit(s) − mean − sd² (2s − 1)`. There are one or three.
fn logit_normal_critical_points(mean: f64, sd: f64) -> Vec<f64> {
    let h = |s: f64| logit(s) - mean - sd * sd * (2.0 * s - 1.0);
    // Scan in logit space so the tails are resolved.
    let grid: Vec<f64> = (0..=4000)
        .map(|i| {
            let t = -40.0 + 80.0 * i as f64 / 4000.0;
            1.0 / (1.0 + (-t).exp())
        })
        .filter(|s| *s > 0.0 && *s < 1.0)
        .collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (h(lo), h(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if h(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}

fn logit_normal_peak(mean: f64, sd: f64) -> f64 {
    logit_normal_critical_points(mean, sd)
        .into_iter()
        .map(|s| logit_normal_pdf(s, mean, sd))
        .fold(0.0, f64::max)
}

/// 1-D family of beta densities, for quadrature over the domain.
#[derive(Debug, Clone)]
pub struct BetaFamily {
    params: Vec<(f64, f64)>,
}

impl BetaFamily {
    pub fn new(params: Vec<(f64, f64)>) -> Self {
        BetaFamily { params }
    }
}

impl FactorFamily for BetaFamily {
    fn len(&self) -> usize {
        self.params.len()
    }

    fn masses(&self, a: f64, b: f64, out: &mut [f64]) {
        let cdf = |x: f64, p: f64, q: f64| {
            if x <= 0.0 {
                0.0
            } else if x >= 1.0 {
                1.0
            } else {
                beta_reg(p, q, x)
            }
        };
        for (o, &(p, q)) in out.iter_mut().zip(&self.params) {
            *o = (cdf(b, p, q) - cdf(a, p, q)).max(0.0);
        }
    }

    fn values(&self, t: f64, out: &mut [f64]) {
        for (o, &(p, q)) in out.iter_mut().zip(&self.params) {
            *o = beta_pdf(t, p, q);
        }
    }

    fn ranges(&self, a: f64, b: f64, lo: &mut [f64], hi: &mut [f64]) {
        for (i, &(p, q)) in self.params.iter().enumerate() {
            let (fa, fb) = (beta_pdf(a, p, q), beta_pdf(b, p, q));
            lo[i] = fa.min(fb);
            hi[i] = fa.max(fb);
            if p + q > 2.0 {
                let mode = (p - 1.0) / (p + q - 2.0);
                if (a..=b).contains(&mode) {
                    hi[i] = hi[i].max(beta_peak(p, q));
                }
            }
        }
    }

    fn polynomial_degree(&self) -> Option<usize> {
        let integral = |v: f64| v.fract() == 0.0 && v >= 1.0;
        self.params
            .iter()
            .map(|&(p, q)| (integral(p) && integral(q)).then(|| (p + q - 2.0) as usize))
            .try_fold(0, |acc, d| d.map(|d| acc.max(d)))
    }
}

/// 1-D family of logit-normal densities.
#[derive(Debug, Clone)]
pub struct LogitNormalFamily {
    params: Vec<(f64, f64)>,
    critical: Vec<Vec<f64>>,
}

impl LogitNormalFamily {
    pub fn new(params: Vec<(f64, f64)>) -> Self {
        let critical = params.iter().map(|&(m, s)| logit_normal_critical_points(m, s)).collect();
        LogitNormalFamily { params, critical }
    }
}

impl FactorFamily for LogitNormalFamily {
    fn len(&self) -> usize {
        self.params.len()
    }

    fn masses(&self, a: f64, b: f64, out: &mut [f64]) {
        for (o, &(m, s)) in out.iter_mut().zip(&self.params) {
            let n = Normal::new(m, s).expect("positive sd");
            let cdf = |x: f64| {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    n.cdf(logit(x))
                }
            };
            *o = (cdf(b) - cdf(a)).max(0.0);
        }
    }

    fn values(&self, t: f64, out: &mut [f64]) {
        for (o, &(m, s)) in out.iter_mut().zip(&self.params) {
            *o = logit_normal_pdf(t, m, s);
        }
    }

    fn ranges(&self, a: f64, b: f64, lo: &mut [f64], hi: &mut [f64]) {
        for (i, &(m, s)) in self.params.iter().enumerate() {
            let mut vals = vec![logit_normal_pdf(a, m, s), logit_normal_pdf(b, m, s)];
            vals.extend(
                self.critical[i]
                    .iter()
                    .filter(|c| (a..=b).contains(*c))
                    .map(|&c| logit_normal_pdf(c, m, s)),
            );
            lo[i] = vals.iter().copied().fold(f64::INFINITY, f64::min);
            hi[i] = vals.iter().copied().fold(0.0, f64::max);
        }
    }
}

fn check_weights<'a>(weights: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidConfig(format!("mixture weight {w} must be nonnegative")));
        }
    }
    Ok(())
}

fn check_shape(a: f64, b: f64) -> Result<()> {
    if !(a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "beta({a}, {b}) must have both parameters ≥ 1 to be bounded"
        )));
    }
    Ok(())
}

fn check_sd(sd: f64) -> Result<()> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidConfig(format!("sd must be positive, got {sd}")));
    }
    Ok(())
}

/// A validated truth with its window, normalizer and dominating bound.
#[derive(Debug, Clone)]
pub struct Truth {
    spec: TruthSpec,
    domain: Option<PolygonDomain>,
    /// `∫_D` of the 2-D mixture density (1 for 1-D kinds).
    mass: f64,
    bound: f64,
}

impl Truth {
    /// `domain` is required for spatial kinds and ignored for temporal ones.
    pub fn new(spec: TruthSpec, domain: Option<PolygonDomain>) -> Result<Self> {
        let settings = QuadratureSettings {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
        };
        let need_domain = || {
            domain
                .clone()
                .ok_or_else(|| Error::InvalidConfig("a spatial truth needs a domain".into()))
        };
        let (domain, mass, bound) = match &spec {
            TruthSpec::BetaMixture1d { components } => {
                check_weights(components.iter().map(|c| &c.weight))?;
                for c in components {
                    check_shape(c.a, c.b)?;
                }
                let bound = components.iter().map(|c| c.weight * beta_peak(c.a, c.b)).sum();
                (None, 1.0, bound)
            }
            TruthSpec::LogitNormalMixture1d { components } => {
                check_weights(components.iter().map(|c| &c.weight))?;
                for c in components {
                    check_sd(c.sd)?;
                }
                let bound = components
                    .iter()
                    .map(|c| c.weight * logit_normal_peak(c.mean, c.sd))
                    .sum();
                (None, 1.0, bound)
            }
            TruthSpec::BetaMixture2d { total, components } => {
                check_weights(components.iter().map(|c| &c.weight).chain([total]))?;
                for c in components {
                    check_shape(c.ax, c.bx)?;
                    check_shape(c.ay, c.by)?;
                }
                let d = need_domain()?;
                let fx = BetaFamily::new(components.iter().map(|c| (c.ax, c.bx)).collect());
                let fy = BetaFamily::new(components.iter().map(|c| (c.ay, c.by)).collect());
                let mass = mixture_mass(&d, &fx, &fy, components.iter().map(|c| c.weight), settings)?;
                let peak: f64 = components
                    .iter()
                    .map(|c| c.weight * beta_peak(c.ax, c.bx) * beta_peak(c.ay, c.by))
                    .sum();
                (Some(d), mass, total * peak / mass)
            }
            TruthSpec::LogitNormalMixture2d { total, components } => {
                check_weights(components.iter().map(|c| &c.weight).chain([total]))?;
                for c in components {
                    check_sd(c.sd_x)?;
                    check_sd(c.sd_y)?;
                }
                let d = need_domain()?;
                let fx = LogitNormalFamily::new(components.iter().map(|c| (c.mean_x, c.sd_x)).collect());
                let fy = LogitNormalFamily::new(components.iter().map(|c| (c.mean_y, c.sd_y)).collect());
                let mass = mixture_mass(&d, &fx, &fy, components.iter().map(|c| c.weight), settings)?;
                let peak: f64 = components
                    .iter()
                    .map(|c| {
                        c.weight * logit_normal_peak(c.mean_x, c.sd_x) * logit_normal_peak(c.mean_y, c.sd_y)
                    })
                    .sum();
                (Some(d), mass, total * peak / mass)
            }
            TruthSpec::Homogeneous { rate, spatial } => {
                check_weights([rate])?;
                let d = if *spatial { Some(need_domain()?) } else { None };
                (d, 1.0, *rate)
            }
        };
        if !(mass > 0.0) {
            return Err(Error::InvalidConfig("the truth has no mass on the domain".into()));
        }
        Ok(Truth {
            spec,
            domain,
            mass,
            bound,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (spec, domain) = builtin_truth(name)?;
        Truth::new(spec, domain)
    }

    pub fn spec(&self) -> &TruthSpec {
        &self.spec
    }

    pub fn is_spatial(&self) -> bool {
        self.domain.is_some()
    }

    pub fn domain(&self) -> Option<&PolygonDomain> {
        self.domain.as_ref()
    }

    /// An upper bound on the intensity: the sum of component peaks.
    pub fn lambda_max(&self) -> f64 {
        self.bound
    }

    /// Expected number of points over the window.
    pub fn total(&self) -> f64 {
        match &self.spec {
            TruthSpec::BetaMixture1d { components } => components.iter().map(|c| c.weight).sum(),
            TruthSpec::LogitNormalMixture1d { components } => components.iter().map(|c| c.weight).sum(),
            TruthSpec::BetaMixture2d { total, .. } | TruthSpec::LogitNormalMixture2d { total, .. } => *total,
            TruthSpec::Homogeneous { rate, .. } => match &self.domain {
                Some(d) => rate * d.area(),
                None => *rate,
            },
        }
    }

    pub fn intensity_1d(&self, s: f64) -> Result<f64> {
        if self.is_spatial() {
            return Err(Error::InvalidConfig("a spatial truth needs (x, y) points".into()));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::EventOutOfRange(s));
        }
        Ok(match &self.spec {
            TruthSpec::BetaMixture1d { components } => {
                components.iter().map(|c| c.weight * beta_pdf(s, c.a, c.b)).sum()
            }
            TruthSpec::LogitNormalMixture1d { components } => components
                .iter()
                .map(|c| c.weight * logit_normal_pdf(s, c.mean, c.sd))
                .sum(),
            TruthSpec::Homogeneous { rate, .. } => *rate,
            _ => unreachable!("spatial kinds carry a domain"),
        })
    }

    pub fn intensity_2d(&self, p: Point) -> Result<f64> {
        let domain = self
            .domain
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("a temporal truth needs 1-D points".into()))?;
        if !domain.contains(p) {
            return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
        }
        Ok(match &self.spec {
            TruthSpec::BetaMixture2d { total, components } => {
                let f: f64 = components
                    .iter()
                    .map(|c| c.weight * beta_pdf(p.x, c.ax, c.bx) * beta_pdf(p.y, c.ay, c.by))
                    .sum();
                total * f / self.mass
            }
            TruthSpec::LogitNormalMixture2d { total, components } => {
                let f: f64 = components
                    .iter()
                    .map(|c| {
                        c.weight * logit_normal_pdf(p.x, c.mean_x, c.sd_x) * logit_normal_pdf(p.y, c.mean_y, c.sd_y)
                    })
                    .sum();
                total * f / self.mass
            }
            TruthSpec::Homogeneous { rate, .. } => *rate,
            _ => unreachable!("temporal kinds carry no domain"),
        })
    }

    /// `λ(s) / Λ`.
    pub fn density_1d(&self, s: f64) -> Result<f64> {
        Ok(self.intensity_1d(s)? / self.total())
    }

    pub fn density_2d(&self, p: Point) -> Result<f64> {
        Ok(self.intensity_2d(p)? / self.total())
    }
}

fn mixture_mass<FX: FactorFamily, FY: FactorFamily>(
    domain: &PolygonDomain,
    fx: &FX,
    fy: &FY,
    weights: impl Iterator<Item = f64>,
    settings: QuadratureSettings,
) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..fx.len()).map(|i| (i, i)).collect();
    let masses = integrate_products(domain, domain.bbox(), fx, fy, &pairs, settings)?;
    Ok(weights.zip(masses).map(|(w, m)| w * m).sum())
}

fn check_bound(lambda_max: f64) -> Result<()> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda_max must be positive and finite, got {lambda_max}"
        )));
    }
    Ok(())
}

/// Thinning on `(0, 1)`: `N ~ Poisson(λ_max)` uniform candidates, each kept
/// with probability `λ(s)/λ_max`. Sorted ascending.
pub fn thin_1d<R: Rng + ?Sized>(
    intensity: impl Fn(f64) -> f64,
    lambda_max: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_bound(lambda_max)?;
    let n = poisson_sample(lambda_max, rng);
    let mut out = Vec::new();
    for _ in 0..n {
        let s: f64 = rng.random();
        let u: f64 = rng.random();
        if s > 0.0 && u * lambda_max < intensity(s) {
            out.push(s);
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Thinning over the domain's bounding box, in generation order.
pub fn thin_2d<R: Rng + ?Sized>(
    intensity: impl Fn(Point) -> f64,
    domain: &PolygonDomain,
    lambda_max: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    check_bound(lambda_max)?;
    let bbox = domain.bbox();
    let n = poisson_sample(lambda_max * bbox.area(), rng);
    let mut out = Vec::new();
    for _ in 0..n {
        let p = bbox.sample_uniform(rng);
        let u: f64 = rng.random();
        if domain.contains(p) && u * lambda_max < intensity(p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Draws one pattern from `truth` on the simulation substream of `seed`.
/// `lambda_max` defaults to the truth's own bound.
pub fn simulate_nhpp(truth: &Truth, lambda_max: Option<f64>, seed: u64) -> Result<PointPattern> {
    let bound = lambda_max.unwrap_or(truth.lambda_max());
    let mut rng = substream(seed, Stream::Simulation);
    match truth.domain() {
        Some(d) => Ok(PointPattern::Spatial(thin_2d(
            |p| truth.intensity_2d(p).unwrap_or(0.0),
            d,
            bound,
            &mut rng,
        )?)),
        None => Ok(PointPattern::Temporal(thin_1d(
            |s| truth.intensity_1d(s).unwrap_or(0.0),
            bound,
            &mut rng,
        )?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn logit_normal_at_half_uses_jacobian() {
        let t = Truth::builtin("logit-normal-mixture-1d").unwrap();
        let phi = |z: f64, m: f64, s: f64| (-(z - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let hand = (0.4 * phi(0.0, -2.2, 1.0) + 0.6 * phi(0.0, 0.3, 0.8)) * 4.0;
        assert!((t.density_1d(0.5).unwrap() - hand).abs() < 1e-12);
        assert!(matches!(t.intensity_1d(1.0), Err(Error::EventOutOfRange(_))));
    }

    #[test]
    fn bounds_dominate_a_fine_grid() {
        for name in ["beta-mixture-1d", "logit-normal-mixture-1d"] {
            let t = Truth::builtin(name).unwrap();
            let sup = (1..10_000)
                .map(|i| t.intensity_1d(i as f64 / 10_000.0).unwrap())
                .fold(0.0, f64::max);
            assert!(t.lambda_max() >= sup, "{name}: {} < {sup}", t.lambda_max());
        }
        let t = Truth::builtin("triangle-bimodal").unwrap();
        let d = t.domain().unwrap().clone();
        let mut sup: f64 = 0.0;
        for i in 1..200 {
            for j in 1..200 {
                let p = Point::new(i as f64 / 200.0, j as f64 / 200.0);
                if d.contains(p) {
                    sup = sup.max(t.intensity_2d(p).unwrap());
                }
            }
        }
        assert!(t.lambda_max() >= sup);
    }

    #[test]
    fn logit_normal_critical_points_find_both_modes() {
        // sd² > 2 makes the density bimodal when the mean is 0.
        let c = logit_normal_critical_points(0.0, 2.0);
        assert_eq!(c.len(), 3);
        assert!((c[1] - 0.5).abs() < 1e-12);
        assert_eq!(logit_normal_critical_points(0.3, 0.8).len(), 1);
    }

    #[test]
    fn truncated_mixture_integrates_to_total() {
        let t = Truth::builtin("triangle-bimodal").unwrap();
        // Midpoint rule on a fine grid as an independent check.
        let m = 800;
        let h = 1.0 / m as f64;
        let d = t.domain().unwrap().clone();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let p = Point::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                if d.contains(p) {
                    acc += t.intensity_2d(p).unwrap() * h * h;
                }
            }
        }
        assert!((acc / 300.0 - 1.0).abs() < 2e-3, "{acc}");
        assert!(matches!(t.intensity_2d(Point::new(0.9, 0.9)), Err(Error::PointOutsideDomain { .. })));
    }

    #[test]
    fn beta_family_masses_match_closed_form() {
        let f = BetaFamily::new(vec![(4.0, 17.0), (2.5, 3.5)]);
        assert_eq!(BetaFamily::new(vec![(4.0, 17.0), (12.0, 9.0)]).polynomial_degree(), Some(19));
        assert_eq!(f.polynomial_degree(), None);
        let mut out = [0.0; 2];
        f.masses(0.0, 1.0, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] - 1.0).abs() < 1e-12);
        let d = PolygonDomain::rectangle(Rect::new(0.1, 0.2, 0.6, 0.7)).unwrap();
        let got = integrate_products(
            &d,
            Rect::UNIT,
            &f,
            &f,
            &[(0, 1)],
            QuadratureSettings { tol: 1e-10, max_depth: 16 },
        )
        .unwrap()[0];
        let hand = (beta_reg(4.0, 17.0, 0.6) - beta_reg(4.0, 17.0, 0.1))
            * (beta_reg(2.5, 3.5, 0.7) - beta_reg(2.5, 3.5, 0.2));
        assert!((got - hand).abs() < 1e-10);
    }

    #[test]
    fn homogeneous_counts_are_poisson() {
        let t = Truth::builtin("homogeneous-2d").unwrap();
        let reps = 200;
        let counts: Vec<f64> = (0..reps)
            .map(|r| simulate_nhpp(&t, None, r).unwrap().len() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        assert!((mean - 200.0).abs() < 3.0 * (200.0 / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn patterns_are_sorted_or_inside() {
        let t = Truth::builtin("beta-mixture-1d").unwrap();
        let p = simulate_nhpp(&t, None, 4).unwrap();
        let s = p.as_temporal().unwrap();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.iter().all(|&x| x > 0.0 && x < 1.0));
        let t = Truth::builtin("triangle-bimodal").unwrap();
        let d = t.domain().unwrap().clone();
        let p = simulate_nhpp(&t, None, 4).unwrap();
        assert!(p.as_spatial().unwrap().iter().all(|q| d.contains(*q)));
        assert!(simulate_nhpp(&t, Some(0.0), 4).is_err());
        assert!(matches!(builtin_truth("nope"), Err(Error::InvalidConfig(m)) if m.contains("triangle-bimodal")));
    }

    #[test]
    fn homogeneous_points_pass_ks_uniformity() {
        let t = Truth::builtin("homogeneous-1d").unwrap();
        let passes = (0..100u64)
            .filter(|&r| {
                let s = simulate_nhpp(&t, None, 1000 + r).unwrap().as_temporal().unwrap().to_vec();
                let n = s.len() as f64;
                let d = s
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
                    .fold(0.0, f64::max);
                // Level-0.01 critical value with the small-sample correction.
                d < 1.628 / (n.sqrt() + 0.12 + 0.11 / n.sqrt())
            })
            .count();
        assert!(passes >= 95, "{passes}");
    }

    #[test]
    fn counts_follow_the_poisson_law() {
        let t = Truth::builtin("beta-mixture-1d").unwrap();
        let reps = 400;
        let counts: Vec<f64> = (0..reps)
            .map(|r| simulate_nhpp(&t, None, 50_000 + r).unwrap().len() as f64)
            .collect();
        let n = reps as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let total = t.total();
        assert!((mean - total).abs() < 3.0 * (total / n).sqrt(), "{mean}");
        // Poisson fourth central moment is λ + 3λ².
        let var_se = ((total + 2.0 * total * total) / n).sqrt();
        assert!((var - total).abs() < 3.0 * var_se, "{var}");
    }
}
