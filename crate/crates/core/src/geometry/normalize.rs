use serde::{Deserialize, Serialize};

use super::{Point, PolygonDomain, Rect, Ring};
use crate::error::{Error, Result};

/// Margin kept between the normalized bounding box and the unit square edge.
pub const MARGIN: f64 = 0.01;

/// `unit = offset + scale · (orig − origin)`, isotropic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub scale: f64,
    pub origin: Point,
    pub offset: Point,
}

impl AffineTransform {
    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.offset.x + self.scale * (p.x - self.origin.x),
            self.offset.y + self.scale * (p.y - self.origin.y),
        )
    }

    pub fn invert(&self, p: Point) -> Point {
        Point::new(
            self.origin.x + (p.x - self.offset.x) / self.scale,
            self.origin.y + (p.y - self.offset.y) / self.scale,
        )
    }

    /// Converts an intensity per unit-square area to one per original area.
    pub fn intensity_to_original(&self, lambda_unit: f64) -> f64 {
        lambda_unit * self.scale * self.scale
    }

    pub fn is_identity(&self, eps: f64) -> bool {
        (self.scale - 1.0).abs() <= eps
            && (self.offset.x - self.origin.x).abs() <= eps
            && (self.offset.y - self.origin.y).abs() <= eps
    }
}

/// Maps the boundary's bounding box into `[δ, 1 − δ]²` with one scale on
/// both axes, anchored at `(δ, δ)`, and applies the same map to the points.
pub fn normalize_to_unit_square(
    points: &[Point],
    boundary: &[Ring],
) -> Result<(Vec<Point>, PolygonDomain, AffineTransform)> {
    let bbox = Rect::bounding(boundary.iter().flat_map(|r| r.coords.iter().copied()))
        .ok_or_else(|| Error::InvalidPolygon("empty boundary".into()))?;
    let extent = bbox.width().max(bbox.height());
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidPolygon("boundary has zero extent".into()));
    }
    if let Some(p) = points.iter().find(|p| !bbox.contains(**p)) {
        return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
    }
    let t = AffineTransform {
        scale: (1.0 - 2.0 * MARGIN) / extent,
        origin: Point::new(bbox.x0, bbox.y0),
        offset: Point::new(MARGIN, MARGIN),
    };
    let rings = boundary
        .iter()
        .map(|r| Ring::new(r.role, r.coords.iter().map(|p| t.apply(*p)).collect()))
        .collect();
    let domain = PolygonDomain::new(rings)?;
    let mapped = points.iter().map(|p| t.apply(*p)).collect();
    Ok((mapped, domain, t))
}
