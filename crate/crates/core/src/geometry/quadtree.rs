//! Adaptive quadtree integration of separable integrands over `D ∩ R`.
//!
//! The integrand is a product `f(x)·g(y)` drawn from two families of 1-D
//! densities. A region fully inside the domain contributes the closed-form
//! rectangle mass. A region cut by the boundary is handled in one of two
//! ways:
//!
//! * both families polynomial: the clipped piece is integrated exactly as
//!   `∮ (F(x) − F(x_ref)) g(y) dy` with Gauss–Legendre on each edge;
//! * otherwise: `|piece| / |bbox| · ∫_bbox f·g`, with error at most
//!   `min(|piece|, |bbox| − |piece|) · (max_bbox fg − min_bbox fg)`.
//!   Regions whose bound is not yet below `tol` are split into quadrants.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use rand::Rng;

use super::{clip_ring, signed_area, Point, PolygonDomain, Rect, RingRole};
use crate::error::{Error, Result};
use crate::special::bernstein_cdf;

/// A family of 1-D densities on `[0, 1]` that the integrator can bound.
pub trait FactorFamily: Sync {
    fn len(&self) -> usize;

    /// `out[i] = ∫_a^b f_i`.
    fn masses(&self, a: f64, b: f64, out: &mut [f64]);

    /// `out[i] = f_i(t)`.
    fn values(&self, t: f64, out: &mut [f64]);

    /// `lo[i] ≤ f_i(t) ≤ hi[i]` for all `t ∈ [a, b]`.
    fn ranges(&self, a: f64, b: f64, lo: &mut [f64], hi: &mut [f64]);

    /// Common polynomial degree of every member, when the family is polynomial.
    fn polynomial_degree(&self) -> Option<usize> {
        None
    }
}

/// The part of a polygon domain inside one rectangle.
#[derive(Debug, Clone)]
pub struct Region {
    rect: Rect,
    rings: Vec<(RingRole, Vec<Point>)>,
    area: f64,
    bbox: Option<Rect>,
}

impl Region {
    pub fn new(domain: &PolygonDomain, rect: Rect) -> Self {
        let rings = domain
            .rings()
            .iter()
            .map(|r| (r.role, r.coords.as_slice()));
        Self::from_rings(rect, rings)
    }

    fn from_rings<'a>(rect: Rect, rings: impl Iterator<Item = (RingRole, &'a [Point])>) -> Self {
        let mut clipped = Vec::new();
        let mut area = 0.0;
        let mut bbox: Option<Rect> = None;
        for (role, pts) in rings {
            let c = clip_ring(pts, &rect);
            if c.len() < 3 {
                continue;
            }
            let a = signed_area(&c).abs();
            if a == 0.0 {
                continue;
            }
            match role {
                RingRole::Outer => {
                    area += a;
                    let b = Rect::bounding(c.iter().copied()).expect("nonempty");
                    bbox = Some(bbox.map_or(b, |x| x.union(&b)));
                }
                RingRole::Hole => area -= a,
            }
            clipped.push((role, c));
        }
        let rect_area = rect.area();
        let area = area.clamp(0.0, rect_area);
        Region {
            rect,
            rings: clipped,
            area: if area <= rect_area * 1e-14 { 0.0 } else { area },
            bbox,
        }
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Bounding box of the clipped outer rings (a superset of the piece).
    pub fn bbox(&self) -> Option<Rect> {
        if self.area == 0.0 {
            None
        } else {
            self.bbox
        }
    }

    pub fn is_inside(&self) -> bool {
        self.area >= self.rect.area() * (1.0 - 1e-12)
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0.0
    }

    pub fn split(&self) -> [Region; 4] {
        self.rect.quadrants().map(|q| {
            Region::from_rings(q, self.rings.iter().map(|(r, c)| (*r, c.as_slice())))
        })
    }

    /// Quadtree-guided uniform draw from the piece: descend into quadrants
    /// with probability proportional to their clipped area until a region
    /// lies fully inside the domain.
    pub(crate) fn sample_by_descent<R: Rng + ?Sized>(
        &self,
        domain: &PolygonDomain,
        rng: &mut R,
    ) -> Point {
        let mut region = self.clone();
        for _ in 0..48 {
            if region.is_inside() {
                return region.rect.sample_uniform(rng);
            }
            let children = region.split();
            let total: f64 = children.iter().map(|c| c.area).sum();
            if total <= 0.0 {
                break;
            }
            let mut u = rng.random::<f64>() * total;
            let mut chosen = children.len() - 1;
            for (i, c) in children.iter().enumerate() {
                if c.area > 0.0 && u < c.area {
                    chosen = i;
                    break;
                }
                u -= c.area;
            }
            while children[chosen].area == 0.0 && chosen > 0 {
                chosen -= 1;
            }
            region = children[chosen].clone();
        }
        // Sub-ulp region: any point of it is as good as another.
        let c = Point::new(
            0.5 * (region.rect.x0 + region.rect.x1),
            0.5 * (region.rect.y0 + region.rect.y1),
        );
        if domain.contains(c) {
            c
        } else {
            region
                .rings
                .iter()
                .find(|(role, _)| *role == RingRole::Outer)
                .and_then(|(_, pts)| pts.first().copied())
                .unwrap_or(c)
        }
    }
}

struct Scratch {
    mx: Vec<f64>,
    my: Vec<f64>,
    lox: Vec<f64>,
    hix: Vec<f64>,
    loy: Vec<f64>,
    hiy: Vec<f64>,
}

impl Scratch {
    fn new(nx: usize, ny: usize) -> Self {
        Scratch {
            mx: vec![0.0; nx],
            my: vec![0.0; ny],
            lox: vec![0.0; nx],
            hix: vec![0.0; nx],
            loy: vec![0.0; ny],
            hiy: vec![0.0; ny],
        }
    }
}

/// Settings for [`integrate_products`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSettings {
    pub tol: f64,
    pub max_depth: u32,
}

/// `∫∫_{D ∩ root} fx_i(x) fy_j(y) dx dy` for every `(i, j)` in `pairs`.
pub fn integrate_products<FX: FactorFamily, FY: FactorFamily>(
    domain: &PolygonDomain,
    root: Rect,
    fx: &FX,
    fy: &FY,
    pairs: &[(usize, usize)],
    settings: QuadratureSettings,
) -> Result<Vec<f64>> {
    let region = Region::new(domain, root);
    let active: Vec<usize> = (0..pairs.len()).collect();
    // F has degree dx + 1 and g degree dy, so the edge integrand has degree
    // dx + dy + 1 in the edge parameter.
    let exact = match (fx.polynomial_degree(), fy.polynomial_degree()) {
        (Some(dx), Some(dy)) => {
            let nodes = NonZeroUsize::new((dx + dy + 2).div_ceil(2)).expect("nonzero");
            Some(GaussLegendre::new(nodes))
        }
        _ => None,
    };
    let ctx = Ctx {
        fx,
        fy,
        pairs,
        settings,
        exact,
    };
    let (acc, worst) = ctx.visit(&region, 0, &active);
    if worst >= settings.tol {
        return Err(Error::QuadratureNonConvergence {
            max_depth: settings.max_depth,
            residual: worst,
            tol: settings.tol,
        });
    }
    Ok(acc)
}

struct Ctx<'a, FX, FY> {
    fx: &'a FX,
    fy: &'a FY,
    pairs: &'a [(usize, usize)],
    settings: QuadratureSettings,
    exact: Option<GaussLegendre>,
}

/// Depth below which children are visited in parallel.
const PARALLEL_DEPTH: u32 = 3;

impl<FX: FactorFamily, FY: FactorFamily> Ctx<'_, FX, FY> {
    fn visit(&self, region: &Region, depth: u32, active: &[usize]) -> (Vec<f64>, f64) {
        let mut acc = vec![0.0; self.pairs.len()];
        let mut worst = 0.0_f64;
        if region.is_empty() || active.is_empty() {
            return (acc, worst);
        }
        let mut s = Scratch::new(self.fx.len(), self.fy.len());
        let r = region.rect;
        if region.is_inside() {
            self.fx.masses(r.x0, r.x1, &mut s.mx);
            self.fy.masses(r.y0, r.y1, &mut s.my);
            for &p in active {
                let (i, j) = self.pairs[p];
                acc[p] += s.mx[i] * s.my[j];
            }
            return (acc, worst);
        }
        let bb = region.bbox().expect("nonempty region has a bbox");
        if let Some(rule) = &self.exact {
            self.green(region, bb.x0, rule, active, &mut acc);
            return (acc, worst);
        }
        let bb_area = bb.area();
        let ratio = (region.area / bb_area).min(1.0);
        let slack = region.area.min(bb_area - region.area).max(0.0);
        self.fx.masses(bb.x0, bb.x1, &mut s.mx);
        self.fy.masses(bb.y0, bb.y1, &mut s.my);
        if slack > 0.0 {
            self.fx.ranges(bb.x0, bb.x1, &mut s.lox, &mut s.hix);
            self.fy.ranges(bb.y0, bb.y1, &mut s.loy, &mut s.hiy);
        }
        let at_max = depth >= self.settings.max_depth;
        let mut next = Vec::new();
        for &p in active {
            let (i, j) = self.pairs[p];
            let bound = if slack > 0.0 {
                slack * (s.hix[i] * s.hiy[j] - s.lox[i] * s.loy[j])
            } else {
                0.0
            };
            if bound < self.settings.tol || at_max {
                acc[p] += ratio * s.mx[i] * s.my[j];
                if bound >= self.settings.tol {
                    worst = worst.max(bound);
                }
            } else {
                next.push(p);
            }
        }
        if next.is_empty() {
            return (acc, worst);
        }
        let children = region.split();
        let results: Vec<(Vec<f64>, f64)> = if depth < PARALLEL_DEPTH {
            use rayon::prelude::*;
            children
                .par_iter()
                .map(|c| self.visit(c, depth + 1, &next))
                .collect()
        } else {
            children
                .iter()
                .map(|c| self.visit(c, depth + 1, &next))
                .collect()
        };
        for (child_acc, child_worst) in results {
            for &p in &next {
                acc[p] += child_acc[p];
            }
            worst = worst.max(child_worst);
        }
        (acc, worst)
    }
}

impl<FX: FactorFamily, FY: FactorFamily> Ctx<'_, FX, FY> {
    /// Exact integral over the clipped piece by the divergence theorem.
    fn green(
        &self,
        region: &Region,
        x_ref: f64,
        rule: &GaussLegendre,
        active: &[usize],
        acc: &mut [f64],
    ) {
        let nx = self.fx.len();
        let ny = self.fy.len();
        let mut at_ref = vec![0.0; nx];
        self.fx.masses(0.0, x_ref, &mut at_ref);
        let mut big_f = vec![0.0; nx];
        let mut g = vec![0.0; ny];
        let mut sum = vec![0.0; self.pairs.len()];
        for (role, pts) in &region.rings {
            let orientation = signed_area(pts).signum();
            let sign = match role {
                RingRole::Outer => orientation,
                RingRole::Hole => -orientation,
            };
            for (i, p) in pts.iter().enumerate() {
                let q = pts[(i + 1) % pts.len()];
                let dy = q.y - p.y;
                if dy == 0.0 {
                    continue;
                }
                let dx = q.x - p.x;
                for &(node, weight) in rule.as_node_weight_pairs() {
                    let t = 0.5 * (node + 1.0);
                    let x = (p.x + t * dx).clamp(0.0, 1.0);
                    let y = (p.y + t * dy).clamp(0.0, 1.0);
                    self.fx.masses(0.0, x, &mut big_f);
                    self.fy.values(y, &mut g);
                    let w = sign * 0.5 * weight * dy;
                    for &a in active {
                        let (ix, iy) = self.pairs[a];
                        sum[a] += w * (big_f[ix] - at_ref[ix]) * g[iy];
                    }
                }
            }
        }
        for &a in active {
            acc[a] += sum[a].max(0.0);
        }
    }
}

/// Closed-form `∫∫_r φ_{kx,ky}` over an axis-aligned rectangle `r ⊆ [0,1]²`:
/// the product of regularized incomplete beta increments on each axis.
pub fn rect_basis_integral(kx: usize, ky: usize, k: usize, r: &Rect) -> Result<f64> {
    if k == 0 || kx == 0 || ky == 0 || kx > k || ky > k {
        return Err(Error::IndexOutOfRange { kx, ky, k });
    }
    let within = |v: f64| (0.0..=1.0).contains(&v);
    if !(within(r.x0) && within(r.x1) && within(r.y0) && within(r.y1))
        || r.x0 > r.x1
        || r.y0 > r.y1
    {
        return Err(Error::InvalidConfig(format!(
            "rectangle {r:?} is not inside the unit square"
        )));
    }
    let mx = bernstein_cdf(k, kx, r.x1) - bernstein_cdf(k, kx, r.x0);
    let my = bernstein_cdf(k, ky, r.y1) - bernstein_cdf(k, ky, r.y0);
    Ok((mx * my).clamp(0.0, 1.0))
}
