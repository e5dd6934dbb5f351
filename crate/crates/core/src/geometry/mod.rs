//! Polygonal observation windows inside the unit square.
//!
//! A [`PolygonDomain`] is a set of closed rings tagged as outer boundaries or
//! holes and filled with the even-odd rule. Everything downstream (basis
//! normalizers, cell areas, residual cells) is computed from it through the
//! quadtree in [`quadtree`] and the cache in [`cache`].

pub mod cache;
pub mod normalize;
pub mod quadtree;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{build_basis_cache, BasisCache, CacheStore, DEFAULT_MAX_DEPTH, DEFAULT_TOL};
pub use normalize::{normalize_to_unit_square, AffineTransform};
pub use quadtree::{rect_basis_integral, Region};

/// Points closer than this to an edge count as on the boundary.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Closed axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn quadrants(&self) -> [Rect; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        [
            Rect::new(self.x0, self.y0, xm, ym),
            Rect::new(xm, self.y0, self.x1, ym),
            Rect::new(self.x0, ym, xm, self.y1),
            Rect::new(xm, ym, self.x1, self.y1),
        ]
    }

    /// Cell `(kx, ky)` (1-based) of the regular K×K partition of the unit square.
    pub fn grid_cell(kx: usize, ky: usize, k: usize) -> Rect {
        let kf = k as f64;
        Rect::new(
            (kx - 1) as f64 / kf,
            (ky - 1) as f64 / kf,
            kx as f64 / kf,
            ky as f64 / kf,
        )
    }

    pub(crate) fn bounding(points: impl IntoIterator<Item = Point>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut r = Rect::new(first.x, first.y, first.x, first.y);
        for p in it {
            r.x0 = r.x0.min(p.x);
            r.y0 = r.y0.min(p.y);
            r.x1 = r.x1.max(p.x);
            r.y1 = r.y1.max(p.y);
        }
        Some(r)
    }

    fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            self.x0 + rng.random::<f64>() * self.width(),
            self.y0 + rng.random::<f64>() * self.height(),
        )
    }
}

/// 1-based index of the partition cell containing `v` on an axis split into
/// `k` half-open cells `[(j-1)/k, j/k)`; the right end belongs to cell `k`.
pub fn axis_cell(v: f64, k: usize) -> usize {
    ((v * k as f64).floor() as isize + 1).clamp(1, k as isize) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingRole {
    Outer,
    Hole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub role: RingRole,
    pub coords: Vec<Point>,
}

impl Ring {
    pub fn new(role: RingRole, coords: Vec<Point>) -> Self {
        Ring { role, coords }
    }

    pub fn outer(coords: &[(f64, f64)]) -> Self {
        Ring::new(RingRole::Outer, coords.iter().copied().map(Point::from).collect())
    }

    pub fn hole(coords: &[(f64, f64)]) -> Self {
        Ring::new(RingRole::Hole, coords.iter().copied().map(Point::from).collect())
    }
}

/// Multipolygon observation window inside `[0, 1]²`, even-odd filled.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonDomain {
    rings: Vec<Ring>,
    area: f64,
    bbox: Rect,
}

impl PolygonDomain {
    /// Validates and builds a domain. A trailing vertex equal to the first is
    /// dropped, so both open and explicitly closed rings are accepted.
    pub fn new(rings: Vec<Ring>) -> Result<Self> {
        if rings.is_empty() {
            return Err(Error::InvalidPolygon("no rings".into()));
        }
        if !rings.iter().any(|r| r.role == RingRole::Outer) {
            return Err(Error::InvalidPolygon("no outer ring".into()));
        }
        let mut cleaned = Vec::with_capacity(rings.len());
        let mut area = 0.0;
        for (idx, ring) in rings.into_iter().enumerate() {
            let mut coords = ring.coords;
            if coords.len() > 1 && coords.first() == coords.last() {
                coords.pop();
            }
            for p in &coords {
                if !(p.x.is_finite() && p.y.is_finite())
                    || p.x < 0.0
                    || p.x > 1.0
                    || p.y < 0.0
                    || p.y > 1.0
                {
                    return Err(Error::InvalidPolygon(format!(
                        "ring {idx}: vertex ({}, {}) outside the unit square",
                        p.x, p.y
                    )));
                }
            }
            let mut distinct: Vec<Point> = Vec::with_capacity(coords.len());
            for p in &coords {
                if !distinct.contains(p) {
                    distinct.push(*p);
                }
            }
            if distinct.len() < 3 {
                return Err(Error::InvalidPolygon(format!(
                    "ring {idx}: fewer than 3 distinct vertices"
                )));
            }
            let a = signed_area(&coords).abs();
            if a <= 0.0 {
                return Err(Error::InvalidPolygon(format!("ring {idx}: zero area")));
            }
            area += match ring.role {
                RingRole::Outer => a,
                RingRole::Hole => -a,
            };
            cleaned.push(Ring::new(ring.role, coords));
        }
        if !(area > 0.0 && area <= 1.0 + 1e-12) {
            return Err(Error::InvalidPolygon(format!(
                "total area {area} outside (0, 1]"
            )));
        }
        let bbox = Rect::bounding(
            cleaned
                .iter()
                .filter(|r| r.role == RingRole::Outer)
                .flat_map(|r| r.coords.iter().copied()),
        )
        .expect("outer ring present");
        Ok(PolygonDomain {
            rings: cleaned,
            area: area.min(1.0),
            bbox,
        })
    }

    pub fn unit_square() -> Self {
        Self::rectangle(Rect::UNIT).expect("unit square is valid")
    }

    pub fn rectangle(r: Rect) -> Result<Self> {
        Self::new(vec![Ring::outer(&[
            (r.x0, r.y0),
            (r.x1, r.y0),
            (r.x1, r.y1),
            (r.x0, r.y1),
        ])])
    }

    /// Triangle used in the bundled synthetic spatial example.
    pub fn example_triangle() -> Self {
        Self::new(vec![Ring::outer(&[(0.01, 0.01), (0.2, 0.9), (0.9, 0.1)])])
            .expect("triangle is valid")
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    /// Shoelace area of outer rings minus holes.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn is_unit_square(&self) -> bool {
        (self.area - 1.0).abs() < 1e-15 && self.bbox == Rect::UNIT
    }

    /// Even-odd membership; points on an edge (within 1e-12) are inside.
    pub fn contains(&self, p: Point) -> bool {
        if !self.bbox.contains(p) {
            return false;
        }
        let mut inside = false;
        for ring in &self.rings {
            let pts = &ring.coords;
            let n = pts.len();
            for i in 0..n {
                let a = pts[i];
                let b = pts[(i + 1) % n];
                if on_segment(p, a, b) {
                    return true;
                }
                if (a.y > p.y) != (b.y > p.y) {
                    let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                    if p.x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Area of `D ∩ r`, exact up to rounding (polygon clipping).
    pub fn clipped_area(&self, r: &Rect) -> f64 {
        Region::new(self, *r).area()
    }

    /// Uniform draw from `D ∩ r`. Tries rejection from the bounding box of
    /// the clipped piece, then falls back to descending the quadtree by
    /// piece area. `None` when the intersection has no area.
    pub fn sample_uniform_in<R: Rng + ?Sized>(
        &self,
        r: &Rect,
        max_tries: usize,
        rng: &mut R,
    ) -> Option<Point> {
        let region = Region::new(self, *r);
        if region.area() <= 0.0 {
            return None;
        }
        let bb = region.bbox()?;
        for _ in 0..max_tries {
            let p = bb.sample_uniform(rng);
            if r.contains(p) && self.contains(p) {
                return Some(p);
            }
        }
        Some(region.sample_by_descent(self, rng))
    }
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.x - a.x).hypot(p.y - a.y) <= EDGE_EPS;
    }
    let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
    if !(-1e-12..=1.0 + 1e-12).contains(&t) {
        return false;
    }
    let cross = (p.x - a.x) * dy - (p.y - a.y) * dx;
    cross.abs() / len2.sqrt() <= EDGE_EPS
}

pub(crate) fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Sutherland–Hodgman clip of a ring against an axis-aligned rectangle.
/// Concave rings may produce zero-width bridges along the rectangle edges;
/// they carry no area.
pub(crate) fn clip_ring(ring: &[Point], r: &Rect) -> Vec<Point> {
    #[derive(Clone, Copy)]
    enum Side {
        Left(f64),
        Right(f64),
        Bottom(f64),
        Top(f64),
    }
    fn inside(p: Point, s: Side) -> bool {
        match s {
            Side::Left(v) => p.x >= v,
            Side::Right(v) => p.x <= v,
            Side::Bottom(v) => p.y >= v,
            Side::Top(v) => p.y <= v,
        }
    }
    fn cross(a: Point, b: Point, s: Side) -> Point {
        match s {
            Side::Left(v) | Side::Right(v) => {
                let t = (v - a.x) / (b.x - a.x);
                Point::new(v, a.y + t * (b.y - a.y))
            }
            Side::Bottom(v) | Side::Top(v) => {
                let t = (v - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), v)
            }
        }
    }
    let mut out: Vec<Point> = ring.to_vec();
    for side in [
        Side::Left(r.x0),
        Side::Right(r.x1),
        Side::Bottom(r.y0),
        Side::Top(r.y1),
    ] {
        if out.is_empty() {
            break;
        }
        let input = std::mem::take(&mut out);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            let cur_in = inside(cur, side);
            let prev_in = inside(prev, side);
            if cur_in {
                if !prev_in {
                    out.push(cross(prev, cur, side));
                }
                out.push(cur);
            } else if prev_in {
                out.push(cross(prev, cur, side));
            }
        }
    }
    out
}
