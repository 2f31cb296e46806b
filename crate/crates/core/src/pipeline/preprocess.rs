use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::model::{ObservationGrid, Point, SiteSet};

use super::ingest::StationRecord;

/// Lambert (Schmidt) equal-area projection of longitude `psi` and latitude
/// `phi`, both in radians.
pub fn lambert_project(psi: f64, phi: f64) -> Result<Point> {
    if !psi.is_finite() || !phi.is_finite() || phi.abs() > std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidInput(format!("latitude {phi} rad outside [-pi/2, pi/2]")));
    }
    let r = 2.0 * (FRAC_PI_4 - phi / 2.0).sin();
    Ok([r * psi.sin(), -r * psi.cos()])
}

/// Projected coordinates of the stations.
pub fn project_sites(records: &[StationRecord]) -> Result<SiteSet> {
    let coords = records
        .iter()
        .map(|r| lambert_project(r.lon, r.lat))
        .collect::<Result<Vec<_>>>()?;
    SiteSet::new(coords)
}

/// Per-station trend line and calendar-month effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationComponents {
    pub station: String,
    /// Value of the trend line at `t = 0`.
    pub intercept: f64,
    /// Trend increment per month.
    pub slope: f64,
    /// Effect of each calendar month (January first); sums to zero.
    pub seasonal: Vec<f64>,
}

/// Trend and seasonal components of every retained station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionComponents {
    pub period: usize,
    /// Calendar month (0 = January) of time step `t = 1`.
    pub first_month: usize,
    pub stations: Vec<StationComponents>,
}

impl DecompositionComponents {
    /// Trend plus seasonal effect of `station` at time step `t`.
    pub fn offset(&self, station: usize, t: usize) -> Result<f64> {
        let c = self
            .stations
            .get(station)
            .ok_or_else(|| Error::Config(format!("unknown station index {station}")))?;
        let month = (self.first_month + t + self.period - 1) % self.period;
        Ok(c.intercept + c.slope * t as f64 + c.seasonal[month])
    }

    /// Components that change nothing.
    pub fn zero(stations: &[String], period: usize) -> Self {
        DecompositionComponents {
            period,
            first_month: 0,
            stations: stations
                .iter()
                .map(|s| StationComponents {
                    station: s.clone(),
                    intercept: 0.0,
                    slope: 0.0,
                    seasonal: vec![0.0; period],
                })
                .collect(),
        }
    }
}

/// Output of [`detrend_deseasonalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub residuals: ObservationGrid,
    pub components: DecompositionComponents,
    /// Records that were kept, in grid row order.
    pub kept: Vec<usize>,
}

/// Removes a linear trend and calendar-month effects from each station by
/// one least-squares fit of `a + b t + s(month)` with the month effects
/// constrained to sum to zero. Series shorter than `min_periods` full
/// periods get no seasonal term. Stations without observations are dropped.
pub fn detrend_deseasonalize(records: &[StationRecord], period: usize, min_periods: usize) -> Result<Decomposition> {
    if period < 2 {
        return Err(Error::Config("seasonal period must be at least 2".into()));
    }
    if records.is_empty() {
        return Err(Error::Data("no stations to decompose".into()));
    }
    let t_max = records[0].series.len();
    if records.iter().any(|r| r.series.len() != t_max) {
        return Err(Error::Data("station series are not aligned to a common length".into()));
    }
    for r in records {
        r.validate()?;
    }
    let first_month = records[0].first_month();
    let seasonal_on = t_max >= period * min_periods;
    if !seasonal_on {
        log::warn!("series of {t_max} steps is shorter than {min_periods} periods; no seasonal term is removed");
    }

    let mut kept = Vec::new();
    let mut stations = Vec::new();
    for (k, r) in records.iter().enumerate() {
        let obs: Vec<(usize, f64)> = r.series.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i + 1, v))).collect();
        if obs.is_empty() {
            log::warn!("station {} has no observations and is excluded", r.id);
            continue;
        }
        kept.push(k);
        stations.push(fit_station(&r.id, &obs, period, first_month, seasonal_on));
    }
    if kept.is_empty() {
        return Err(Error::Data("every station is empty".into()));
    }
    let components = DecompositionComponents {
        period,
        first_month,
        stations,
    };
    let residuals = ObservationGrid::from_options(kept.len(), t_max, |i, t| {
        records[kept[i]].series[t - 1].map(|v| v - components.offset(i, t).expect("row in range"))
    })?;
    Ok(Decomposition {
        residuals,
        components,
        kept,
    })
}

fn fit_station(id: &str, obs: &[(usize, f64)], period: usize, first_month: usize, seasonal: bool) -> StationComponents {
    let month_of = |t: usize| (first_month + t - 1) % period;
    // columns: 1, t, then month contrasts d_m = 1{m} − 1{last} for m < period − 1
    let cols = if seasonal { 2 + period - 1 } else { 2 };
    let design = DMatrix::from_fn(obs.len(), cols, |r, c| {
        let t = obs[r].0;
        match c {
            0 => 1.0,
            1 => t as f64,
            _ => {
                let m = month_of(t);
                if m == c - 2 {
                    1.0
                } else if m == period - 1 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    });
    let y = DVector::from_iterator(obs.len(), obs.iter().map(|o| o.1));
    // minimum-norm least squares also covers rank-deficient designs
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .expect("SVD with both factors computed");
    let mut effects = vec![0.0; period];
    if seasonal {
        for m in 0..period - 1 {
            effects[m] = coef[2 + m];
        }
        effects[period - 1] = -effects[..period - 1].iter().sum::<f64>();
    }
    StationComponents {
        station: id.to_string(),
        intercept: coef[0],
        slope: coef[1],
        seasonal: effects,
    }
}

/// Shifts predictive draws of `station` at time `t` back to the raw scale.
pub fn add_back(draws: &[f64], components: &DecompositionComponents, station: usize, t: usize) -> Result<Vec<f64>> {
    let shift = components.offset(station, t)?;
    Ok(draws.iter().map(|d| d + shift).collect())
}
