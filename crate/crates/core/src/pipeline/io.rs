//! CSV and JSON files exchanged by the command-line runs. Floats are
//! written in shortest round-trip form so that files re-read bit-exactly.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{scalar_getter, scalar_names, AcceptanceStats, Sample, Trace, TraceMeta};
use crate::model::{LatentField, ModelParams, ObservationGrid, SiteSet};
use crate::predict::Interval;

fn num(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("line {line}: `{s}` is not a number ({what})")))
}

/// JSON sidecar of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub meta: TraceMeta,
    pub acceptance: AcceptanceStats,
    pub jitter: f64,
    /// Free-form run description, typically the run configuration.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Writes one row per sample: the scalar parameters, `μ₀`, then every latent
/// value as `x_<site>_<t>`.
pub fn write_trace(dir: &Path, trace: &Trace, config: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = trace.meta.n_sites;
    let t_max = trace.meta.t_max;
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    let mut header: Vec<String> = vec!["sample".into()];
    header.extend(scalar_names().iter().map(|s| s.to_string()));
    header.extend((0..n).map(|i| format!("mu0_{i}")));
    for i in 0..n {
        header.extend((0..=t_max).map(|t| format!("x_{i}_{t}")));
    }
    w.write_record(&header)?;
    let getters: Vec<_> = scalar_names().iter().map(|s| scalar_getter(s).expect("known")).collect();
    for (k, s) in trace.samples.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(getters.iter().map(|g| g(&s.params).to_string()));
        row.extend(s.params.mu0.iter().map(|v| v.to_string()));
        for i in 0..n {
            row.extend((0..=t_max).map(|t| s.latents.get(i, t).to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    let jitter = trace.samples.first().map_or(crate::kernels::DEFAULT_JITTER, |s| s.params.jitter);
    let side = TraceSidecar {
        meta: trace.meta.clone(),
        acceptance: trace.acceptance.clone(),
        jitter,
        config,
    };
    std::fs::write(dir.join("trace.meta.json"), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(dir: &Path) -> Result<Trace> {
    let side: TraceSidecar = serde_json::from_slice(&std::fs::read(dir.join("trace.meta.json"))?)?;
    let n = side.meta.n_sites;
    let t_max = side.meta.t_max;
    let names = scalar_names();
    let mut rdr = csv::Reader::from_path(dir.join("trace.csv"))?;
    let width = 1 + names.len() + n + n * (t_max + 1);
    if rdr.headers()?.len() != width {
        return Err(Error::Data(format!(
            "trace.csv has {} columns, the sidecar implies {width}",
            rdr.headers()?.len()
        )));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let v: Vec<f64> = rec.iter().skip(1).map(|s| num(s, "trace", line)).collect::<Result<_>>()?;
        let mut params = ModelParams::reference_study(vec![0.0; n]);
        params.jitter = side.jitter;
        params.beta0f = v[0];
        params.beta1f = v[1];
        params.beta0g = v[2];
        params.beta1g = v[3];
        for (k, id) in crate::mcmc::KernelParamId::ALL.iter().enumerate() {
            id.set(&mut params, v[4 + k]);
        }
        let off = names.len();
        params.mu0.copy_from_slice(&v[off..off + n]);
        let xs = &v[off + n..];
        let latents = LatentField::new(DMatrix::from_fn(n, t_max + 1, |i, t| xs[i * (t_max + 1) + t]))?;
        samples.push(Sample { params, latents });
    }
    Ok(Trace {
        samples,
        acceptance: side.acceptance,
        meta: side.meta,
    })
}

/// A gridded dataset on projected coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub sites: SiteSet,
    pub grid: ObservationGrid,
    /// True latent values when the grid was simulated.
    pub latent: Option<LatentField>,
}

/// Columns `site,site_x,site_y,t,value[,latent]`; `t = 0` rows carry only the
/// initial latent layer and an empty value.
pub fn write_grid(path: &Path, data: &GridData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let with_latent = data.latent.is_some();
    let mut header = vec!["site", "site_x", "site_y", "t", "value"];
    if with_latent {
        header.push("latent");
    }
    w.write_record(&header)?;
    let t0 = if with_latent { 0 } else { 1 };
    for i in 0..data.sites.n() {
        let [sx, sy] = data.sites.coords[i];
        for t in t0..=data.grid.t_max() {
            let value = if t == 0 { String::new() } else { data.grid.get(i, t).map_or(String::new(), |v| v.to_string()) };
            let mut row = vec![i.to_string(), sx.to_string(), sy.to_string(), t.to_string(), value];
            if let Some(x) = &data.latent {
                row.push(x.get(i, t).to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridData> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Data(format!("grid file lacks a `{name}` column")));
    let (ci, cx, cy, ct, cv) = (need("site")?, need("site_x")?, need("site_y")?, need("t")?, need("value")?);
    let cl = col("latent");
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let idx = |k: usize| -> Result<usize> {
            rec[k].trim().parse().map_err(|_| Error::Data(format!("line {line}: bad integer `{}`", &rec[k])))
        };
        let value = if rec[cv].trim().is_empty() { None } else { Some(num(&rec[cv], "value", line)?) };
        let latent = match cl {
            Some(c) if !rec[c].trim().is_empty() => Some(num(&rec[c], "latent", line)?),
            _ => None,
        };
        rows.push((idx(ci)?, num(&rec[cx], "site_x", line)?, num(&rec[cy], "site_y", line)?, idx(ct)?, value, latent));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().ok_or_else(|| Error::Data("grid file has no rows".into()))?;
    let t_max = rows.iter().map(|r| r.3).max().unwrap_or(0);
    if t_max == 0 {
        return Err(Error::Data("grid file has no time steps".into()));
    }
    let mut coords = vec![None; n];
    let mut values = DMatrix::from_element(n, t_max, None);
    let mut latent = DMatrix::from_element(n, t_max + 1, None);
    for &(i, x, y, t, v, l) in &rows {
        match coords[i] {
            None => coords[i] = Some([x, y]),
            Some(c) if c != [x, y] => return Err(Error::Data(format!("site {i} has inconsistent coordinates"))),
            _ => {}
        }
        if t >= 1 {
            values[(i, t - 1)] = v;
        }
        latent[(i, t)] = l;
    }
    let coords = coords
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::Data(format!("site {i} never appears"))))
        .collect::<Result<Vec<_>>>()?;
    let grid = ObservationGrid::from_options(n, t_max, |i, t| values[(i, t - 1)])?;
    let latent = if latent.iter().all(Option::is_some) {
        Some(LatentField::new(latent.map(|v| v.expect("checked")))?)
    } else {
        None
    };
    Ok(GridData {
        sites: SiteSet::new(coords)?,
        grid,
        latent,
    })
}

/// One row of a predictions file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRow {
    pub site: [f64; 2],
    pub t: usize,
    pub interval: Interval,
    pub observed: Option<f64>,
    pub hit: Option<bool>,
}

/// Columns `site_x,site_y,t,lower,median,upper`, plus `observed,hit` when
/// any row carries them.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let extra = rows.iter().any(|r| r.observed.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["site_x", "site_y", "t", "lower", "median", "upper"];
    if extra {
        header.extend(["observed", "hit"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let iv = r.interval;
        let mut row = vec![
            r.site[0].to_string(),
            r.site[1].to_string(),
            r.t.to_string(),
            iv.lower.to_string(),
            iv.median.to_string(),
            iv.upper.to_string(),
        ];
        if extra {
            row.push(r.observed.map_or(String::new(), |v| v.to_string()));
            row.push(r.hit.map_or(String::new(), |h| (h as u8).to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One `(t, t*)` comparison of the geometric covariance formula with a
/// Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovCheckRow {
    pub t: usize,
    pub tstar: usize,
    pub formula: f64,
    pub mc_estimate: f64,
    pub mc_se: f64,
}

pub fn write_covcheck(path: &Path, rows: &[CovCheckRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "tstar", "formula", "mc_estimate", "mc_se"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.tstar.to_string(),
            r.formula.to_string(),
            r.mc_estimate.to_string(),
            r.mc_se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
