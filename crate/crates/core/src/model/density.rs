use crate::error::{Error, Result};
use crate::kernels::{gram, symmetric_from_fn, GramMatrix};

use super::{check_field, LatentField, ModelParams, ObservationGrid, SiteSet};

/// The three additive pieces of the joint log density
/// `log p(x₀) + log p(x₁..x_T | x₀) + log p(y | x)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DensityTerms {
    pub initial: f64,
    pub transition: f64,
    pub observation: f64,
}

impl DensityTerms {
    pub fn total(&self) -> f64 {
        self.initial + self.transition + self.observation
    }
}

/// Covariance of the initial layer over the sites.
pub fn sigma0(p: &ModelParams, s: &SiteSet) -> Result<GramMatrix> {
    gram(&p.k0, &s.coords, p.jitter * p.k0.variance).map_err(|e| e.within("initial-layer covariance"))
}

/// `I_T ⊗ Σ_η + Σ`, where `Σ` holds `c_g` evaluated at the lagged latent
/// values.
pub fn build_sigma_tilde(x: &LatentField, p: &ModelParams, s: &SiteSet) -> Result<GramMatrix> {
    check_field(x, p, s)?;
    let n = s.n();
    let t_max = x.t_max();
    let sig_eta = symmetric_from_fn(n, |i, j| p.keta.cov_planar(&s.coords[i], &s.coords[j]));
    // lagged inputs, stacked time-major: entry (t-1)*n + i is x(i, t-1)
    let lagged = x.stacked(0, t_max - 1);
    let m = symmetric_from_fn(n * t_max, |a, b| {
        let g = p.kg.cov_scalar(lagged[a], lagged[b]);
        if a / n == b / n {
            g + sig_eta[(a % n, b % n)]
        } else {
            g
        }
    });
    let jitter = p.jitter * (p.keta.variance + p.kg.variance);
    GramMatrix::from_symmetric(m, jitter).map_err(|e| e.within("transition covariance"))
}

/// Stacked `x(s_i, t) − β_{0g} − β_{1g} x(s_i, t−1)` for `t = 1..=T`.
pub fn transition_residuals(x: &LatentField, p: &ModelParams) -> Vec<f64> {
    let n = x.n();
    let mut r = Vec::with_capacity(n * x.t_max());
    for t in 1..=x.t_max() {
        for i in 0..n {
            r.push(x.get(i, t) - p.beta0g - p.beta1g * x.get(i, t - 1));
        }
    }
    r
}

pub(crate) fn initial_log_density(x: &LatentField, p: &ModelParams, sig0: &GramMatrix) -> f64 {
    let resid: Vec<f64> = (0..x.n()).map(|i| x.get(i, 0) - p.mu0[i]).collect();
    sig0.factor().gaussian_log_density(&resid)
}

/// Log joint density of the latent states, the initial layer included.
pub fn state_log_density(x: &LatentField, p: &ModelParams, s: &SiteSet) -> Result<f64> {
    check_field(x, p, s)?;
    let sig0 = sigma0(p, s)?;
    let tilde = build_sigma_tilde(x, p, s)?;
    let r = transition_residuals(x, p);
    Ok(initial_log_density(x, p, &sig0) + tilde.factor().gaussian_log_density(&r))
}

/// `c_f(x(s_i,t₁), x(s_j,t₂)) + c_ε(s_i,s_j) δ(t₁−t₂)` over an arbitrary list
/// of `(site, t)` cells.
pub fn sigma_feps_over(
    x: &LatentField,
    p: &ModelParams,
    s: &SiteSet,
    cells: &[(usize, usize)],
) -> Result<GramMatrix> {
    if cells.is_empty() {
        return Err(Error::Degenerate("no cells to build an observation covariance over".into()));
    }
    let xs: Vec<f64> = cells.iter().map(|&(i, t)| x.get(i, t)).collect();
    let m = symmetric_from_fn(cells.len(), |a, b| {
        let (ia, ta) = cells[a];
        let (ib, tb) = cells[b];
        let f = p.kf.cov_scalar(xs[a], xs[b]);
        if ta == tb {
            f + p.keps.cov_planar(&s.coords[ia], &s.coords[ib])
        } else {
            f
        }
    });
    let jitter = p.jitter * (p.kf.variance + p.keps.variance);
    GramMatrix::from_symmetric(m, jitter).map_err(|e| e.within("observation covariance"))
}

/// Conditional covariance of all `nT` observations given the latent field.
pub fn build_sigma_feps(x: &LatentField, p: &ModelParams, s: &SiteSet) -> Result<GramMatrix> {
    check_field(x, p, s)?;
    let cells: Vec<(usize, usize)> = (1..=x.t_max())
        .flat_map(|t| (0..s.n()).map(move |i| (i, t)))
        .collect();
    sigma_feps_over(x, p, s, &cells)
}

pub(crate) fn obs_residuals(y: &ObservationGrid, x: &LatentField, p: &ModelParams, cells: &[(usize, usize)]) -> Vec<f64> {
    cells
        .iter()
        .map(|&(i, t)| y.values[(i, t - 1)] - p.beta0f - p.beta1f * x.get(i, t))
        .collect()
}

pub(crate) fn check_grid(y: &ObservationGrid, x: &LatentField) -> Result<()> {
    if y.n() != x.n() || y.t_max() != x.t_max() {
        return Err(Error::InvalidInput(format!(
            "observation grid is {}x{} but latent field covers {} sites and T = {}",
            y.n(),
            y.t_max(),
            x.n(),
            x.t_max()
        )));
    }
    Ok(())
}

/// Log density of the observed cells given the latent field.
pub fn obs_log_density_given_state(
    y: &ObservationGrid,
    x: &LatentField,
    p: &ModelParams,
    s: &SiteSet,
) -> Result<f64> {
    check_field(x, p, s)?;
    check_grid(y, x)?;
    let cells = y.observed_cells();
    if cells.is_empty() {
        return Err(Error::Degenerate("every observation is missing".into()));
    }
    let cov = sigma_feps_over(x, p, s, &cells)?;
    let r = obs_residuals(y, x, p, &cells);
    Ok(cov.factor().gaussian_log_density(&r))
}
