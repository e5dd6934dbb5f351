use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("quadrature did not converge at depth {max_depth}: worst cell residual bound {residual:.3e} (tol {tol:.3e})")]
    QuadratureNonConvergence {
        max_depth: u32,
        residual: f64,
        tol: f64,
    },

    #[error("basis index ({kx}, {ky}) out of range for K = {k}")]
    IndexOutOfRange { kx: usize, ky: usize, k: usize },

    #[error("basis ({kx}, {ky}) has zero mass on the domain at K = {k}")]
    EmptyBasisCell { kx: usize, ky: usize, k: usize },

    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },

    #[error("event time {0} is outside (0, 1)")]
    EventOutOfRange(f64),

    #[error("K mismatch: draw has K = {draw}, cache has K = {cache}")]
    KMismatch { draw: usize, cache: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bisection bracket [{lo:.3e}, {hi:.3e}] does not contain a root (residuals {f_lo:.3e}, {f_hi:.3e})")]
    BracketFailure {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("no draws to summarize")]
    EmptyDraws,

    #[error("draws come from a fixed-K sampler ({0}); K has no posterior")]
    FixedK(String),

    #[error("{path}:{line}: {message}")]
    DataRow {
        path: String,
        line: usize,
        message: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
