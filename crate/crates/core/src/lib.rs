//! Bayesian nonparametric intensity estimation for Poisson processes on
//! `[0, 1]`, `[0, 1]²` and polygonal windows inside the unit square.
//!
//! The intensity is a weighted sum of Bernstein (beta) basis densities with
//! gamma weights whose normalized form follows a Dirichlet process. Four
//! samplers are provided: temporal intensity (fixed K), temporal density
//! (random K), spatial intensity over a polygon (fixed K) and spatial
//! density over a polygon (random K).

pub mod basis;
pub mod chains;
pub mod diagnostics;
pub mod elicitation;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pattern;
pub mod rng;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use chains::{DrawRecord, FitOutput, Formulation, KPrior, McmcConfig, PriorConfig};
pub use geometry::{BasisCache, CacheStore, Point, PolygonDomain, Rect, Ring, RingRole};
pub use io::RunConfig;
pub use pattern::PointPattern;
pub use simulate::{Truth, TruthSpec};
