//! Run configuration, file formats and run records.
//!
//! Every output is written to a temporary file in the target directory and
//! renamed into place, so a failed command never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chains::{DrawRecord, FitOutput, Formulation, McmcConfig, PriorConfig};
use crate::diagnostics::{GridSummary, ResidualReport};
use crate::elicitation::ElicitationInput;
use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonDomain, Ring, RingRole, DEFAULT_TOL};
use crate::pattern::PointPattern;
use crate::simulate::TruthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Elicit,
    Fit,
    Summarize,
    Residuals,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Elicit => "elicit",
            Command::Fit => "fit",
            Command::Summarize => "summarize",
            Command::Residuals => "residuals",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Pattern CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Polygon JSON; required by the spatial models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<PathBuf>,
    /// Draw logs read by `summarize` and `residuals`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub draws: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_grid_size() -> usize {
    100
}

/// Evaluation grid: `size` cell centres on `(0, 1)`, or the centres of a
/// `size × size` grid over the unit square that fall inside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_grid_size")]
    pub size: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            size: default_grid_size(),
        }
    }
}

impl GridSpec {
    pub fn points_1d(&self) -> Vec<f64> {
        (0..self.size).map(|i| (i as f64 + 0.5) / self.size as f64).collect()
    }

    pub fn points_2d(&self, domain: &PolygonDomain) -> Vec<Point> {
        crate::diagnostics::centre_grid(self.size)
            .into_iter()
            .filter(|p| domain.contains(*p))
            .collect()
    }
}

fn default_residual_m() -> usize {
    10
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    /// Cells per side of the residual grid.
    #[serde(default = "default_residual_m")]
    pub m: usize,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        ResidualSpec {
            m: default_residual_m(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    /// Name of a built-in truth; takes precedence over `truth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSpec>,
    /// Dominating rate; defaults to the truth's own bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
}

fn default_candidates() -> Vec<usize> {
    vec![20, 30, 50, 100]
}

fn default_mc() -> usize {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitSpec {
    #[serde(flatten)]
    pub input: ElicitationInput,
    #[serde(default = "default_candidates")]
    pub candidates: Vec<usize>,
    #[serde(default = "default_mc")]
    pub mc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeSpec {
    /// Credible level of the K interval.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for SummarizeSpec {
    fn default() -> Self {
        SummarizeSpec {
            level: default_level(),
        }
    }
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// One JSON document per run. `seed` is the only source of randomness and
/// overrides `mcmc.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Formulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcConfig>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub residuals: ResidualSpec,
    #[serde(default)]
    pub summarize: SummarizeSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elicit: Option<ElicitSpec>,
}

impl RunConfig {
    /// Parses a config, or the config embedded in a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let config = match value.get("config") {
            Some(inner) if value.get("config_hash").is_some() => inner.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(config)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the canonical JSON form, excluding the output
    /// directory.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.paths.out = None;
        let bytes = serde_json::to_vec(&canonical)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn model(&self) -> Result<Formulation> {
        self.model
            .ok_or_else(|| Error::InvalidConfig("the config has no 'model'".into()))
    }

    pub fn prior(&self) -> Result<&PriorConfig> {
        self.prior
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("the config has no 'prior' section".into()))
    }

    /// The MCMC section with the run seed applied.
    pub fn mcmc(&self) -> Result<McmcConfig> {
        let mut m = self
            .mcmc
            .clone()
            .ok_or_else(|| Error::InvalidConfig("the config has no 'mcmc' section".into()))?;
        m.seed = self.seed;
        Ok(m)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no output directory; pass --out or set paths.out".into()))
    }

    fn require_file<'a>(&self, path: Option<&'a Path>, key: &str, why: &str) -> Result<&'a Path> {
        let path = path.ok_or_else(|| Error::InvalidConfig(format!("{why} needs paths.{key}")))?;
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(path)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.require_file(self.paths.data.as_deref(), "data", "this command")
    }

    pub fn polygon_path(&self) -> Result<&Path> {
        self.require_file(self.paths.polygon.as_deref(), "polygon", "a spatial model")
    }

    /// Checks the sections and files `command` uses.
    pub fn validate(&self, command: Command) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        self.out_dir()?;
        match command {
            Command::Simulate => {
                let spec = self
                    .simulate
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("the config has no 'simulate' section".into()))?;
                if spec.builtin.is_none() && spec.truth.is_none() {
                    return Err(Error::InvalidConfig("simulate needs 'builtin' or 'truth'".into()));
                }
                if let Some(name) = &spec.builtin {
                    crate::simulate::builtin_truth(name)?;
                }
            }
            Command::Elicit => {
                let spec = self
                    .elicit
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("the config has no 'elicit' section".into()))?;
                spec.input.validate()?;
            }
            Command::Fit => {
                let model = self.model()?;
                let prior = self.prior()?;
                prior.validate()?;
                self.mcmc()?.validate()?;
                if !model.is_density() && prior.k.fixed().is_none() {
                    return Err(Error::InvalidConfig(format!(
                        "the {} model requires a fixed K",
                        model.name()
                    )));
                }
                self.data_path()?;
                if model.is_spatial() {
                    self.polygon_path()?;
                }
            }
            Command::Summarize | Command::Residuals => {
                if self.paths.draws.is_empty() {
                    return Err(Error::InvalidConfig(format!("{} needs paths.draws", command.name())));
                }
                for p in &self.paths.draws {
                    if !p.is_file() {
                        return Err(Error::MissingFile(p.clone()));
                    }
                }
                if command == Command::Residuals {
                    self.data_path()?;
                    self.polygon_path()?;
                    if self.residuals.m == 0 {
                        return Err(Error::InvalidConfig("residuals.m must be at least 1".into()));
                    }
                }
                if self.grid.size == 0 {
                    return Err(Error::InvalidConfig("grid.size must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn data_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::DataRow {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses a pattern CSV with header `s` or `x,y`. Temporal values must lie
/// in `(0, 1)`; spatial points must lie in `domain` when one is given.
pub fn parse_pattern_csv(path: &Path, text: &str, domain: Option<&PolygonDomain>) -> Result<PointPattern> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let spatial = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["s"] => false,
        ["x", "y"] => true,
        other => {
            return Err(data_error(
                path,
                1,
                format!("header must be 's' or 'x,y', found '{}'", other.join(",")),
            ))
        }
    };
    let mut events = Vec::new();
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| data_error(path, line, format!("'{raw}' is not a number")))?;
            if !v.is_finite() {
                return Err(data_error(path, line, format!("'{raw}' is not finite")));
            }
            Ok(v)
        };
        if spatial {
            let p = Point::new(field(0)?, field(1)?);
            if let Some(d) = domain {
                if !d.contains(p) {
                    return Err(data_error(path, line, format!("({}, {}) lies outside the domain", p.x, p.y)));
                }
            }
            points.push(p);
        } else {
            let s = field(0)?;
            if !(s > 0.0 && s < 1.0) {
                return Err(data_error(path, line, format!("{s} is outside (0, 1)")));
            }
            events.push(s);
        }
    }
    Ok(if spatial {
        PointPattern::Spatial(points)
    } else {
        PointPattern::Temporal(events)
    })
}

pub fn read_pattern_csv(path: &Path, domain: Option<&PolygonDomain>) -> Result<PointPattern> {
    parse_pattern_csv(path, &read_text(path)?, domain)
}

/// Values use the shortest representation that parses back exactly.
pub fn pattern_csv(pattern: &PointPattern) -> String {
    let mut out = String::new();
    match pattern {
        PointPattern::Temporal(s) => {
            out.push_str("s\n");
            for v in s {
                out.push_str(&format!("{v:?}\n"));
            }
        }
        PointPattern::Spatial(ps) => {
            out.push_str("x,y\n");
            for p in ps {
                out.push_str(&format!("{:?},{:?}\n", p.x, p.y));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRing {
    pub role: RingRole,
    pub coords: Vec<[f64; 2]>,
}

/// `{"rings":[{"role":"outer"|"hole","coords":[[x,y],...]},...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonFile {
    pub rings: Vec<PolygonRing>,
}

impl PolygonFile {
    pub fn from_domain(domain: &PolygonDomain) -> Self {
        PolygonFile {
            rings: domain
                .rings()
                .iter()
                .map(|r| PolygonRing {
                    role: r.role,
                    coords: r.coords.iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
        }
    }

    pub fn to_domain(&self) -> Result<PolygonDomain> {
        PolygonDomain::new(
            self.rings
                .iter()
                .map(|r| Ring::new(r.role, r.coords.iter().map(|&[x, y]| Point::new(x, y)).collect()))
                .collect(),
        )
    }
}

pub fn read_polygon(path: &Path) -> Result<PolygonDomain> {
    let file: PolygonFile = serde_json::from_str(&read_text(path)?)?;
    file.to_domain()
}

/// First line of a draw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawLogHeader {
    #[serde(rename = "type")]
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub formulation: Formulation,
    pub chain: u32,
}

impl DrawLogHeader {
    pub fn new(config_hash: &str, seed: u64, formulation: Formulation, chain: u32) -> Self {
        DrawLogHeader {
            kind: "header".into(),
            config_hash: config_hash.into(),
            seed,
            formulation,
            chain,
        }
    }
}

/// Header line followed by one JSON draw per line.
pub fn draw_log_bytes(header: &DrawLogHeader, draws: &[DrawRecord]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for d in draws {
        serde_json::to_writer(&mut out, d)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn parse_draw_log(path: &Path, text: &str) -> Result<(DrawLogHeader, Vec<DrawRecord>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(Error::EmptyDraws)?;
    let header: DrawLogHeader =
        serde_json::from_str(first).map_err(|e| data_error(path, 1, format!("bad header: {e}")))?;
    if header.kind != "header" {
        return Err(data_error(path, 1, "first line is not a header"));
    }
    let mut draws = Vec::new();
    for (i, line) in lines {
        let d: DrawRecord = serde_json::from_str(line).map_err(|e| data_error(path, i + 1, e.to_string()))?;
        if d.formulation != header.formulation {
            return Err(data_error(path, i + 1, "draw formulation differs from the header"));
        }
        draws.push(d);
    }
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    Ok((header, draws))
}

pub fn read_draw_log(path: &Path) -> Result<(DrawLogHeader, Vec<DrawRecord>)> {
    parse_draw_log(path, &read_text(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: u32,
    pub draws: usize,
    pub draw_log: String,
    pub alpha_acceptance: f64,
    pub alpha_sd: f64,
    pub nan_targets: usize,
}

impl ChainRecord {
    pub fn from_fit(fit: &FitOutput, draw_log: &str) -> Self {
        ChainRecord {
            chain: fit.chain,
            draws: fit.draws.len(),
            draw_log: draw_log.into(),
            alpha_acceptance: fit.alpha_acceptance,
            alpha_sd: fit.alpha_sd,
            nan_targets: fit.nan_targets,
        }
    }
}

/// Everything needed to replay a run; loadable as a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: Command,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<ChainRecord>,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn new(command: Command, config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            command,
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config_hash: config.hash()?,
            config: config.clone(),
            chains: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        })
    }
}

/// Sidecar written next to a simulated pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    pub truth: TruthSpec,
    pub seed: u64,
    pub lambda_max: f64,
    pub expected_n: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<PolygonFile>,
}

/// One row per grid point: coordinates, then mean, q05, q50, q95.
pub fn grid_summary_csv(summary: &GridSummary) -> Result<String> {
    let dim = summary.points.first().map_or(1, Vec::len);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = if dim == 1 { vec!["s"] } else { vec!["x", "y"] };
    header.extend(["mean", "q05", "q50", "q95"]);
    w.write_record(&header)?;
    for (i, p) in summary.points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        for v in [summary.mean[i], summary.q05[i], summary.q50[i], summary.q95[i]] {
            row.push(format!("{v:?}"));
        }
        w.write_record(&row)?;
    }
    finish_csv(w)
}

/// One row per residual cell.
pub fn residual_csv(report: &ResidualReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "ix", "iy", "x0", "y0", "x1", "y1", "area", "n_obs", "mean_mass", "mean", "q05", "q95",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.ix.to_string(),
            c.iy.to_string(),
            format!("{:?}", c.rect.x0),
            format!("{:?}", c.rect.y0),
            format!("{:?}", c.rect.x1),
            format!("{:?}", c.rect.y1),
            format!("{:?}", c.area),
            c.n_obs.to_string(),
            format!("{:?}", c.mean_mass),
            format!("{:?}", c.mean),
            format!("{:?}", c.q05),
            format!("{:?}", c.q95),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv flush failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
