use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonDomain};

/// An observed point pattern: event times on `(0, 1)` or locations in the
/// unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", content = "points", rename_all = "lowercase")]
pub enum PointPattern {
    Temporal(Vec<f64>),
    Spatial(Vec<Point>),
}

impl PointPattern {
    pub fn len(&self) -> usize {
        match self {
            PointPattern::Temporal(v) => v.len(),
            PointPattern::Spatial(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_temporal(&self) -> Option<&[f64]> {
        match self {
            PointPattern::Temporal(v) => Some(v),
            PointPattern::Spatial(_) => None,
        }
    }

    pub fn as_spatial(&self) -> Option<&[Point]> {
        match self {
            PointPattern::Spatial(v) => Some(v),
            PointPattern::Temporal(_) => None,
        }
    }
}

/// Every event strictly inside `(0, 1)`.
pub fn check_events(events: &[f64]) -> Result<()> {
    match events.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        Some(&s) => Err(Error::EventOutOfRange(s)),
        None => Ok(()),
    }
}

pub fn check_points(points: &[Point], domain: &PolygonDomain) -> Result<()> {
    match points.iter().find(|p| !domain.contains(**p)) {
        Some(p) => Err(Error::PointOutsideDomain { x: p.x, y: p.y }),
        None => Ok(()),
    }
}
