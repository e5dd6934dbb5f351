use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use nhpp_core::chains::{fit_chain, DrawRecord, FitOutput, Formulation};
use nhpp_core::diagnostics::{
    k_posterior_summary, predictive_residuals, summarize_grid_1d, summarize_grid_2d,
    total_intensity_summary, GridSummary, KPosterior, Quantity, TotalIntensitySummary,
};
use nhpp_core::elicitation::{choose_c, k_selection_table, ElicitationReport};
use nhpp_core::io::{
    self, grid_summary_csv, pattern_csv, read_draw_log, read_pattern_csv, read_polygon,
    residual_csv, write_atomic, write_json, ChainRecord, Command, DrawLogHeader, Manifest,
    PatternMetadata, PolygonFile, RunConfig,
};
use nhpp_core::simulate::{simulate_nhpp, Truth};
use nhpp_core::{CacheStore, Error, Result};
use serde::Serialize;

/// Runs `command` and returns the files it wrote.
pub fn run(command: Command, config: &RunConfig) -> Result<Vec<PathBuf>> {
    let start = Instant::now();
    let mut manifest = Manifest::new(command, config)?;
    let out = config.out_dir()?.to_path_buf();
    let files = match command {
        Command::Simulate => simulate(config)?,
        Command::Elicit => elicit(config)?,
        Command::Fit => {
            let (files, chains) = fit(config, &manifest.config_hash)?;
            manifest.chains = chains;
            files
        }
        Command::Summarize => summarize(config)?,
        Command::Residuals => residuals(config)?,
    };
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.outputs = files.iter().map(|(name, _)| name.clone()).collect();
    // Nothing is written until every output has been produced.
    let mut written = Vec::with_capacity(files.len() + 1);
    for (name, bytes) in files {
        let path = out.join(&name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    let manifest_path = out.join(format!("manifest-{}.json", command.name()));
    write_json(&manifest_path, &manifest)?;
    written.push(manifest_path);
    Ok(written)
}

type Outputs = Vec<(String, Vec<u8>)>;

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_store(config: &RunConfig) -> Result<CacheStore> {
    let domain = read_polygon(config.polygon_path()?)?;
    Ok(CacheStore::new(Arc::new(domain), config.tol))
}

fn simulate(config: &RunConfig) -> Result<Outputs> {
    let spec = config.simulate.as_ref().expect("validated");
    let truth = match (&spec.builtin, &spec.truth) {
        (Some(name), _) => Truth::builtin(name)?,
        (None, Some(t)) => {
            let domain = match config.paths.polygon.as_deref() {
                Some(p) => Some(read_polygon(p)?),
                None => None,
            };
            Truth::new(t.clone(), domain)?
        }
        (None, None) => unreachable!("validated"),
    };
    let lambda_max = spec.lambda_max.unwrap_or(truth.lambda_max());
    let pattern = simulate_nhpp(&truth, Some(lambda_max), config.seed)?;
    let meta = PatternMetadata {
        builtin: spec.builtin.clone(),
        truth: truth.spec().clone(),
        seed: config.seed,
        lambda_max,
        expected_n: truth.total(),
        n: pattern.len(),
        polygon: truth.domain().map(PolygonFile::from_domain),
    };
    let mut files = vec![
        ("pattern.csv".to_string(), pattern_csv(&pattern).into_bytes()),
        ("pattern.json".to_string(), json_bytes(&meta)?),
    ];
    if let Some(d) = truth.domain() {
        files.push(("polygon.json".to_string(), json_bytes(&PolygonFile::from_domain(d))?));
    }
    Ok(files)
}

fn elicit(config: &RunConfig) -> Result<Outputs> {
    let spec = config.elicit.as_ref().expect("validated");
    let rate = choose_c(&spec.input, spec.mc, config.seed)?;
    let selection = k_selection_table(&spec.input, &spec.candidates, rate.a_alpha, rate.c, spec.mc, config.seed)?;
    let report = ElicitationReport {
        c: rate.c,
        a_alpha: rate.a_alpha,
        b_alpha: spec.input.b_alpha,
        median: rate.median,
        table: selection.rows.clone(),
        recommended_k: selection.recommended_k,
    };
    let mut w = csv_writer();
    w.write_record(["K", "Q", "Q_se", "b_star", "product"])?;
    for r in &selection.rows {
        w.write_record([
            r.k.to_string(),
            format!("{:?}", r.q),
            format!("{:?}", r.q_se),
            format!("{:?}", r.b_star),
            format!("{:?}", r.product),
        ])?;
    }
    Ok(vec![
        ("elicitation.json".to_string(), json_bytes(&report)?),
        ("elicitation.csv".to_string(), finish(w)?),
    ])
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv flush failed: {e}")))
}

fn fit(config: &RunConfig, config_hash: &str) -> Result<(Outputs, Vec<ChainRecord>)> {
    let model = config.model()?;
    let prior = config.prior()?;
    let mcmc = config.mcmc()?;
    let store = if model.is_spatial() { Some(load_store(config)?) } else { None };
    let pattern = read_pattern_csv(config.data_path()?, store.as_ref().map(CacheStore::domain))?;
    let fits: Vec<Result<FitOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..mcmc.chains as u32)
            .map(|chain| {
                let (pattern, store, mcmc) = (&pattern, store.as_ref(), &mcmc);
                scope.spawn(move || fit_chain(model, pattern, store, prior, mcmc, chain))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let mut files = Vec::new();
    let mut records = Vec::new();
    for fit in fits {
        let fit = fit?;
        let name = format!("draws-chain{}.ndjson", fit.chain);
        let header = DrawLogHeader::new(config_hash, config.seed, fit.formulation, fit.chain);
        files.push((name.clone(), io::draw_log_bytes(&header, &fit.draws)?));
        records.push(ChainRecord::from_fit(&fit, &name));
    }
    Ok((files, records))
}

/// Draws of every listed log, which must share one formulation.
fn load_draws(config: &RunConfig) -> Result<(Formulation, Vec<DrawRecord>)> {
    let mut formulation = None;
    let mut all = Vec::new();
    for path in &config.paths.draws {
        let (header, draws) = read_draw_log(path)?;
        if formulation.is_some_and(|f| f != header.formulation) {
            return Err(Error::InvalidConfig(format!(
                "{} holds {} draws, unlike the logs before it",
                path.display(),
                header.formulation.name()
            )));
        }
        formulation = Some(header.formulation);
        all.extend(draws);
    }
    Ok((formulation.ok_or(Error::EmptyDraws)?, all))
}

#[derive(Serialize)]
struct SummaryReport {
    formulation: Formulation,
    draws: usize,
    total_intensity: TotalIntensitySummary,
    #[serde(rename = "K_posterior", skip_serializing_if = "Option::is_none")]
    k_posterior: Option<KPosterior>,
    grid_size: usize,
    grid_points: usize,
}

fn summarize(config: &RunConfig) -> Result<Outputs> {
    let (formulation, draws) = load_draws(config)?;
    let summaries: Vec<GridSummary> = if formulation.is_spatial() {
        let store = load_store(config)?;
        let grid = config.grid.points_2d(store.domain());
        [Quantity::Intensity, Quantity::Density]
            .into_iter()
            .map(|q| summarize_grid_2d(&draws, &grid, &store, q))
            .collect::<Result<_>>()?
    } else {
        let grid = config.grid.points_1d();
        [Quantity::Intensity, Quantity::Density]
            .into_iter()
            .map(|q| summarize_grid_1d(&draws, &grid, q))
            .collect::<Result<_>>()?
    };
    let report = SummaryReport {
        formulation,
        draws: draws.len(),
        total_intensity: total_intensity_summary(&draws)?,
        k_posterior: if formulation.is_density() {
            Some(k_posterior_summary(&draws, config.summarize.level)?)
        } else {
            None
        },
        grid_size: config.grid.size,
        grid_points: summaries[0].points.len(),
    };
    Ok(vec![
        ("summary-intensity.csv".to_string(), grid_summary_csv(&summaries[0])?.into_bytes()),
        ("summary-density.csv".to_string(), grid_summary_csv(&summaries[1])?.into_bytes()),
        ("summary.json".to_string(), json_bytes(&report)?),
    ])
}

#[derive(Serialize)]
struct ResidualMeta<'a> {
    m: usize,
    cells: usize,
    draws: usize,
    worst_conservation_error: f64,
    mass_totals: &'a [f64],
    #[serde(rename = "Lambda")]
    lambda: &'a [f64],
}

fn residuals(config: &RunConfig) -> Result<Outputs> {
    let (formulation, draws) = load_draws(config)?;
    if !formulation.is_spatial() {
        return Err(Error::InvalidConfig("residuals need draws from a spatial model".into()));
    }
    let store = load_store(config)?;
    let pattern = read_pattern_csv(config.data_path()?, Some(store.domain()))?;
    let points = pattern
        .as_spatial()
        .ok_or_else(|| Error::InvalidConfig("residuals need an x,y pattern".into()))?;
    let report = predictive_residuals(&draws, points, &store, config.residuals.m, config.seed)?;
    let meta = ResidualMeta {
        m: report.m,
        cells: report.cells.len(),
        draws: draws.len(),
        worst_conservation_error: report.worst_conservation_error(),
        mass_totals: &report.mass_totals,
        lambda: &report.lambda,
    };
    Ok(vec![
        ("residuals.csv".to_string(), residual_csv(&report)?.into_bytes()),
        ("residuals.json".to_string(), json_bytes(&meta)?),
    ])
}
