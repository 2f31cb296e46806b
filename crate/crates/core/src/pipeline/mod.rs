//! Reproducible runs: configuration, data preparation and the steps behind
//! each command-line subcommand.
//!
//! Random streams are fixed per step so that re-running one step never
//! perturbs another: fitting uses stream 0, prediction 1, leave-one-out 2
//! and imputation 3, all under the configured seed.

mod ingest;
mod io;
mod preprocess;

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelParams, DEFAULT_JITTER};
use crate::mcmc::{default_initial_params, diagnostics, run_chain_on, ChainConfig, DiagnosticsReport, Posterior, PriorSpec, Trace};
use crate::model::{approx_covariance_geometric, ModelParams, ObservationGrid, Point, SiteSet};
use crate::predict::{
    augment_target_latents, impute_missing, interval, loo_coverage_report, loo_refit_report, posterior_predictive,
    AugmentedLayout, LooReport, PredictionTarget,
};
use crate::rng::seeded_rng;
use crate::simulate::simulate_with_rng;

pub use ingest::{ingest_csv, parse_station_csv, StationRecord, STATION_HEADER};
pub use io::{
    read_grid, read_trace, write_covcheck, write_grid, write_predictions, write_trace, CovCheckRow, GridData,
    PredictionRow, TraceSidecar,
};
pub use preprocess::{
    add_back, detrend_deseasonalize, lambert_project, project_sites, Decomposition, DecompositionComponents,
    StationComponents,
};

pub const FIT_STREAM: u64 = 0;
pub const PREDICT_STREAM: u64 = 1;
pub const LOO_STREAM: u64 = 2;
pub const IMPUTE_STREAM: u64 = 3;

/// Layout of the input data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// `site,site_x,site_y,t,value` on projected coordinates.
    Grid,
    /// Raw monthly station rows; projected and decomposed before fitting.
    Stations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetrendConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_period")]
    pub period: usize,
    /// Full periods needed before a seasonal term is estimated.
    #[serde(default = "default_min_periods")]
    pub min_periods: usize,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        DetrendConfig {
            enabled: true,
            period: default_period(),
            min_periods: default_min_periods(),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_period() -> usize {
    12
}
fn default_min_periods() -> usize {
    2
}
fn default_level() -> f64 {
    0.95
}
fn default_chains() -> usize {
    1
}
fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

/// One JSON document describing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub format: DataFormat,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Independent chains; chain `k` runs under seed `seed + k`.
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub kernel_family: KernelFamily,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub targets: Vec<PredictionTarget>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub detrend: DetrendConfig,
}

impl RunConfig {
    /// Reads and validates a configuration; relative paths are taken from
    /// the directory of the configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.is_relative() {
            cfg.data = base.join(&cfg.data);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chain.burn_in >= self.chain.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.chain.burn_in, self.chain.iterations
            )));
        }
        self.chain.validate()?;
        self.prior.validate()?;
        if !self.data.is_file() {
            return Err(Error::Config(format!("data file {} does not exist", self.data.display())));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config("jitter must be a non-negative number".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Output directory of chain `k`: the output directory itself for a
    /// single chain, `chain_<k>` below it otherwise.
    pub fn chain_dir(&self, k: usize) -> PathBuf {
        if self.chains == 1 {
            self.output_dir.clone()
        } else {
            self.output_dir.join(format!("chain_{k}"))
        }
    }
}

/// Data ready for fitting, plus what is needed to map results back.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub sites: SiteSet,
    pub grid: ObservationGrid,
    /// Station names in row order; empty for grid input.
    pub station_ids: Vec<String>,
    /// Present for station input: added back to predictions at stations.
    pub components: Option<DecompositionComponents>,
}

impl PreparedData {
    /// Trend and seasonal offset at monitored row `site`, 0 for grid input.
    pub fn offset(&self, site: usize, t: usize) -> Result<f64> {
        match &self.components {
            Some(c) => c.offset(site, t),
            None => Ok(0.0),
        }
    }
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    match cfg.format {
        DataFormat::Grid => {
            let g = read_grid(&cfg.data)?;
            Ok(PreparedData {
                sites: g.sites,
                grid: g.grid,
                station_ids: Vec::new(),
                components: None,
            })
        }
        DataFormat::Stations => {
            let records = ingest_csv(&cfg.data)?;
            if records.is_empty() {
                return Err(Error::Data("station file has no rows".into()));
            }
            let (grid, components, kept) = if cfg.detrend.enabled {
                let d = detrend_deseasonalize(&records, cfg.detrend.period, cfg.detrend.min_periods)?;
                (d.residuals, d.components, d.kept)
            } else {
                for r in &records {
                    r.validate()?;
                }
                let t_max = records[0].series.len();
                let grid = ObservationGrid::from_options(records.len(), t_max, |i, t| records[i].series[t - 1])?;
                let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
                (grid, DecompositionComponents::zero(&ids, cfg.detrend.period), (0..records.len()).collect())
            };
            let kept_records: Vec<StationRecord> = kept.iter().map(|&k| records[k].clone()).collect();
            Ok(PreparedData {
                sites: project_sites(&kept_records)?,
                grid,
                station_ids: kept_records.into_iter().map(|r| r.id).collect(),
                components: Some(components),
            })
        }
    }
}

/// Sites and grid the chain runs on: the monitored data extended by the
/// configured prediction targets.
pub fn fit_layout(cfg: &RunConfig, data: &PreparedData) -> Result<(AugmentedLayout, ObservationGrid)> {
    let layout = augment_target_latents(&cfg.targets, &data.sites, data.grid.t_max())?;
    let y = layout.extend_grid(&data.grid)?;
    Ok((layout, y))
}

fn chain_config(cfg: &RunConfig, layout: &AugmentedLayout) -> ChainConfig {
    let mut chain = cfg.chain.clone();
    chain.monitored = Some(layout.monitored);
    let mut params = chain
        .initial_params
        .take()
        .unwrap_or_else(|| default_initial_params(&cfg.prior, layout.sites.n()));
    // augmented sites have prior mean 0
    params.mu0.resize(layout.sites.n(), 0.0);
    params.jitter = cfg.jitter;
    chain.initial_params = Some(params);
    chain
}

/// Runs every configured chain, concurrently when there are several, and
/// writes each trace to its [`RunConfig::chain_dir`].
pub fn fit(cfg: &RunConfig) -> Result<Vec<Trace>> {
    let data = prepare_data(cfg)?;
    let (layout, y) = fit_layout(cfg, &data)?;
    let post = Posterior::new(layout.sites.clone(), y, cfg.prior.clone(), layout.monitored)?;
    let chain = chain_config(cfg, &layout);
    let run = |k: usize| -> Result<Trace> {
        let seed = cfg.seed.wrapping_add(k as u64);
        let mut rng = seeded_rng(seed, FIT_STREAM);
        let trace = run_chain_on(&post, &chain, Some(seed), &mut rng).map_err(|e| e.within(format!("chain {k}")))?;
        write_trace(&cfg.chain_dir(k), &trace, serde_json::to_value(cfg)?)?;
        Ok(trace)
    };
    if cfg.chains == 1 {
        return Ok(vec![run(0)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.chains).map(|k| scope.spawn(move || run(k))).collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    })
}

fn load_fitted(cfg: &RunConfig) -> Result<(PreparedData, AugmentedLayout, ObservationGrid, Trace)> {
    let data = prepare_data(cfg)?;
    let (layout, y) = fit_layout(cfg, &data)?;
    let trace = read_trace(&cfg.chain_dir(0)).map_err(|e| e.within("reading the fitted trace"))?;
    if trace.meta.n_sites != layout.sites.n() || trace.meta.t_max != layout.t_max {
        return Err(Error::Config(format!(
            "trace covers {} sites and {} steps but the configuration implies {} and {}; refit",
            trace.meta.n_sites,
            trace.meta.t_max,
            layout.sites.n(),
            layout.t_max
        )));
    }
    Ok((data, layout, y, trace))
}

/// Intervals at every configured target, written to `predictions.csv`.
/// Targets on a station get its trend and seasonal offset added back.
pub fn predict(cfg: &RunConfig) -> Result<Vec<PredictionRow>> {
    if cfg.targets.is_empty() {
        return Err(Error::Config("no prediction targets configured".into()));
    }
    let (data, layout, y, trace) = load_fitted(cfg)?;
    let mut rng = seeded_rng(cfg.seed, PREDICT_STREAM);
    let draws = posterior_predictive(&cfg.targets, &layout, &trace, &y, &mut rng)?;
    let mut rows = Vec::with_capacity(draws.len());
    for (k, d) in draws.iter().enumerate() {
        let row = layout.target_rows[k];
        let shift = if row < layout.monitored {
            data.offset(row, d.target.time)?
        } else {
            if data.components.is_some() {
                log::warn!("target {k} is not at a station; no trend or seasonal component is added back");
            }
            0.0
        };
        if d.clamped > 0 {
            log::warn!("target {k}: {} negative predictive variances clamped to 0", d.clamped);
        }
        rows.push(PredictionRow {
            site: d.target.site,
            t: d.target.time,
            interval: interval(&d.samples, cfg.level)?.shifted(shift),
            observed: None,
            hit: None,
        });
    }
    write_predictions(&cfg.output_dir.join("predictions.csv"), &rows)?;
    Ok(rows)
}

/// Leave-one-out intervals at every observed cell, written to `loo.csv`
/// and summarized in `loo_summary.json`. `refit` reruns a chain per cell.
pub fn loo(cfg: &RunConfig, refit: bool) -> Result<LooReport> {
    let report = if refit {
        let data = prepare_data(cfg)?;
        let chain = chain_config(cfg, &augment_target_latents(&[], &data.sites, data.grid.t_max())?);
        let report = loo_refit_report(&data.grid, &data.sites, &cfg.prior, &chain, cfg.level, cfg.seed)?;
        write_loo(cfg, &data, &report)?;
        report
    } else {
        let (data, layout, y, trace) = load_fitted(cfg)?;
        let mut rng = seeded_rng(cfg.seed, LOO_STREAM);
        let report = loo_coverage_report(&y, &layout.sites, &trace, cfg.level, &mut rng)?;
        write_loo(cfg, &data, &report)?;
        report
    };
    if report.clamped > 0 {
        log::warn!("{} negative predictive variances clamped to 0", report.clamped);
    }
    Ok(report)
}

fn write_loo(cfg: &RunConfig, data: &PreparedData, report: &LooReport) -> Result<()> {
    let rows = report
        .cells
        .iter()
        .map(|c| {
            let shift = data.offset(c.site, c.t)?;
            Ok(PredictionRow {
                site: data.sites.coords[c.site],
                t: c.t,
                interval: c.interval.shifted(shift),
                observed: Some(c.observed + shift),
                hit: Some(c.hit),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_predictions(&cfg.output_dir.join("loo.csv"), &rows)?;
    let summary = serde_json::json!({
        "hits": report.hits,
        "total": report.total,
        "coverage": report.coverage(),
        "mean_interval_length": report.mean_interval_length,
        "level": cfg.level,
        "clamped": report.clamped,
    });
    std::fs::write(cfg.output_dir.join("loo_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

/// Intervals at every missing monitored cell, written to `imputed.csv`.
pub fn impute(cfg: &RunConfig) -> Result<Vec<PredictionRow>> {
    let (data, layout, y, trace) = load_fitted(cfg)?;
    let mut rng = seeded_rng(cfg.seed, IMPUTE_STREAM);
    let draws = impute_missing(&y, &layout.sites, &trace, &mut rng)?;
    let mut rows = Vec::new();
    for d in &draws {
        let Some(site) = data.sites.coords.iter().position(|c| *c == d.target.site) else {
            continue;
        };
        if d.target.time > layout.t_obs {
            continue;
        }
        rows.push(PredictionRow {
            site: d.target.site,
            t: d.target.time,
            interval: interval(&d.samples, cfg.level)?.shifted(data.offset(site, d.target.time)?),
            observed: None,
            hit: None,
        });
    }
    write_predictions(&cfg.output_dir.join("imputed.csv"), &rows)?;
    Ok(rows)
}

/// Pooled summaries of the traces in `dirs`, written to `out` as JSON.
pub fn diagnose(dirs: &[PathBuf], level: f64, out: Option<&Path>) -> Result<DiagnosticsReport> {
    let traces = dirs.iter().map(|d| read_trace(d)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Trace> = traces.iter().collect();
    let report = diagnostics(&refs, level)?;
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}

/// Settings of the Monte-Carlo check of the geometric covariance formula.
#[derive(Debug, Clone, PartialEq)]
pub struct CovCheckStudy {
    pub params: ModelParams,
    pub sites: [Point; 2],
    /// `(t, t*)` pairs; `Y(s₁, t)` is paired with `Y(s₂, t*)`.
    pub pairs: Vec<(usize, usize)>,
    pub replicates: usize,
}

impl Default for CovCheckStudy {
    /// Nearly linear dynamics, where the formula should be accurate.
    fn default() -> Self {
        let mut params = ModelParams::reference_study(vec![0.0; 2]);
        params.beta1f = 1.0;
        params.beta1g = 0.5;
        params.kf = KernelParams { variance: 1e-4, ..params.kf };
        params.kg = KernelParams { variance: 1e-4, ..params.kg };
        CovCheckStudy {
            params,
            sites: [[0.0, 0.0], [0.2, 0.1]],
            pairs: vec![(1, 1), (3, 1), (5, 2)],
            replicates: 20_000,
        }
    }
}

/// Formula value against the sample covariance over independent simulated
/// datasets; the standard error is the standard deviation of the centred
/// products over `√R`.
pub fn covcheck(study: &CovCheckStudy, seed: u64) -> Result<Vec<CovCheckRow>> {
    if study.replicates < 2 {
        return Err(Error::Config("covcheck needs at least 2 replicates".into()));
    }
    if study.pairs.iter().any(|&(t, ts)| t == 0 || ts == 0) {
        return Err(Error::Config("covcheck times start at 1".into()));
    }
    let sites = SiteSet::new(study.sites.to_vec())?;
    study.params.validate(&sites)?;
    let t_max = study.pairs.iter().map(|&(t, ts)| t.max(ts)).max().unwrap_or(1);
    let mut rng = seeded_rng(seed, 0);
    let r = study.replicates;
    let mut a = vec![Vec::with_capacity(r); study.pairs.len()];
    let mut b = vec![Vec::with_capacity(r); study.pairs.len()];
    for _ in 0..r {
        let (_, y) = simulate_with_rng(&study.params, &sites, t_max, &mut rng)?;
        for (k, &(t, ts)) in study.pairs.iter().enumerate() {
            a[k].push(y.values[(0, t - 1)]);
            b[k].push(y.values[(1, ts - 1)]);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    study
        .pairs
        .iter()
        .enumerate()
        .map(|(k, &(t, ts))| {
            let (ma, mb) = (mean(&a[k]), mean(&b[k]));
            let prods: Vec<f64> = a[k].iter().zip(&b[k]).map(|(x, y)| (x - ma) * (y - mb)).collect();
            let est = prods.iter().sum::<f64>() / (r - 1) as f64;
            let mp = mean(&prods);
            let var = prods.iter().map(|p| (p - mp).powi(2)).sum::<f64>() / (r - 1) as f64;
            Ok(CovCheckRow {
                t,
                tstar: ts,
                formula: approx_covariance_geometric(&study.params, &study.sites[0], &study.sites[1], t, ts)?,
                mc_estimate: est,
                mc_se: (var / r as f64).sqrt(),
            })
        })
        .collect()
}

/// Reference-study sites and data: `n` sites uniform in a square of side
/// `side`, `μ₀` drawn from N(0, I), all from one seed.
pub fn simulate_reference(n: usize, t_max: usize, side: f64, seed: u64) -> Result<(GridData, ModelParams)> {
    let mut rng = seeded_rng(seed, 0);
    let sites = SiteSet::random_in_square(n, side, &mut rng)?;
    let mu0 = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let params = ModelParams::reference_study(mu0);
    let (latent, grid) = simulate_with_rng(&params, &sites, t_max, &mut rng)?;
    Ok((
        GridData {
            sites,
            grid,
            latent: Some(latent),
        },
        params,
    ))
}
