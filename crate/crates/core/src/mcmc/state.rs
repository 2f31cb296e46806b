use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{CholeskyFactor, GramMatrix};
use crate::model::{
    build_sigma_tilde, sigma0, sigma_feps_over, transition_residuals, DensityTerms, LatentField, ModelParams,
    ObservationGrid, SiteSet,
};

use super::prior::{DensityPart, PriorSpec};

/// Everything about the target distribution that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub sites: SiteSet,
    pub data: ObservationGrid,
    pub prior: PriorSpec,
    /// The first `monitored` sites carry a free `μ₀` entry; the rest are
    /// augmented prediction sites whose `μ₀` entry is pinned at 0.
    pub monitored: usize,
    cells: Vec<(usize, usize)>,
    observed_at: Vec<bool>,
}

impl Posterior {
    pub fn new(sites: SiteSet, data: ObservationGrid, prior: PriorSpec, monitored: usize) -> Result<Self> {
        prior.validate()?;
        if data.n() != sites.n() {
            return Err(Error::InvalidInput(format!(
                "data covers {} sites but the site set has {}",
                data.n(),
                sites.n()
            )));
        }
        if monitored == 0 || monitored > sites.n() {
            return Err(Error::InvalidInput(format!("monitored site count {monitored} out of range")));
        }
        let cells = data.observed_cells();
        if cells.is_empty() {
            return Err(Error::Degenerate("every observation is missing".into()));
        }
        let mut observed_at = vec![false; data.t_max() + 1];
        for &(_, t) in &cells {
            observed_at[t] = true;
        }
        Ok(Posterior {
            sites,
            data,
            prior,
            monitored,
            cells,
            observed_at,
        })
    }

    pub fn n(&self) -> usize {
        self.sites.n()
    }

    pub fn t_max(&self) -> usize {
        self.data.t_max()
    }

    /// Observed cells, time-major.
    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub(crate) fn has_observations_at(&self, t: usize) -> bool {
        self.observed_at[t]
    }

    pub(crate) fn obs_residuals(&self, x: &LatentField, p: &ModelParams) -> Vec<f64> {
        self.cells
            .iter()
            .map(|&(i, t)| self.data.values[(i, t - 1)] - p.beta0f - p.beta1f * x.get(i, t))
            .collect()
    }
}

/// A covariance together with its factor.
#[derive(Debug, Clone)]
pub(crate) struct CovCache {
    pub entries: DMatrix<f64>,
    pub factor: CholeskyFactor,
}

impl From<GramMatrix> for CovCache {
    fn from(g: GramMatrix) -> Self {
        let (entries, factor) = g.into_parts();
        CovCache { entries, factor }
    }
}

pub(crate) fn build_initial(p: &ModelParams, post: &Posterior) -> Result<CovCache> {
    sigma0(p, &post.sites).map(Into::into)
}

pub(crate) fn build_transition(x: &LatentField, p: &ModelParams, post: &Posterior) -> Result<CovCache> {
    build_sigma_tilde(x, p, &post.sites).map(Into::into)
}

pub(crate) fn build_observation(x: &LatentField, p: &ModelParams, post: &Posterior) -> Result<CovCache> {
    sigma_feps_over(x, p, &post.sites, post.cells()).map(Into::into)
}

pub(crate) fn initial_term(x: &LatentField, p: &ModelParams, c: &CovCache) -> f64 {
    let r: Vec<f64> = (0..x.n()).map(|i| x.get(i, 0) - p.mu0[i]).collect();
    c.factor.gaussian_log_density(&r)
}

pub(crate) fn transition_term(x: &LatentField, p: &ModelParams, c: &CovCache) -> f64 {
    c.factor.gaussian_log_density(&transition_residuals(x, p))
}

pub(crate) fn observation_term(x: &LatentField, p: &ModelParams, post: &Posterior, c: &CovCache) -> f64 {
    c.factor.gaussian_log_density(&post.obs_residuals(x, p))
}

/// Current parameters and latent field of one chain, with the covariance
/// factors and density terms they imply. The caches always describe the
/// current `(params, latents)`.
#[derive(Debug, Clone)]
pub struct ChainState {
    params: ModelParams,
    latents: LatentField,
    pub(crate) initial: CovCache,
    pub(crate) transition: CovCache,
    pub(crate) observation: CovCache,
    pub(crate) terms: DensityTerms,
    pub iteration: usize,
}

impl ChainState {
    pub fn new(post: &Posterior, params: ModelParams, latents: LatentField) -> Result<Self> {
        params.validate(&post.sites)?;
        if latents.n() != post.n() || latents.t_max() != post.t_max() {
            return Err(Error::InvalidInput(format!(
                "latent field is {}x{} but the data need {} sites and T = {}",
                latents.n(),
                latents.t_max(),
                post.n(),
                post.t_max()
            )));
        }
        if params.mu0[post.monitored..].iter().any(|&m| m != 0.0) {
            return Err(Error::InvalidInput("mu0 entries of augmented sites must be zero".into()));
        }
        let initial = build_initial(&params, post)?;
        let transition = build_transition(&latents, &params, post)?;
        let observation = build_observation(&latents, &params, post)?;
        let terms = DensityTerms {
            initial: initial_term(&latents, &params, &initial),
            transition: transition_term(&latents, &params, &transition),
            observation: observation_term(&latents, &params, post, &observation),
        };
        Ok(ChainState {
            params,
            latents,
            initial,
            transition,
            observation,
            terms,
            iteration: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn latents(&self) -> &LatentField {
        &self.latents
    }

    /// Log joint density of latents and data given the parameters.
    pub fn log_density(&self) -> f64 {
        self.terms.total()
    }

    pub fn terms(&self) -> DensityTerms {
        self.terms
    }

    pub(crate) fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub(crate) fn set_latents(&mut self, latents: LatentField) {
        self.latents = latents;
    }

    pub(crate) fn cache_mut(&mut self, part: DensityPart) -> &mut CovCache {
        match part {
            DensityPart::Initial => &mut self.initial,
            DensityPart::Transition => &mut self.transition,
            DensityPart::Observation => &mut self.observation,
        }
    }

    pub(crate) fn term_mut(&mut self, part: DensityPart) -> &mut f64 {
        match part {
            DensityPart::Initial => &mut self.terms.initial,
            DensityPart::Transition => &mut self.terms.transition,
            DensityPart::Observation => &mut self.terms.observation,
        }
    }

    /// Rebuilds every cache from scratch and returns the largest discrepancy
    /// against the cached covariances and density terms.
    pub fn cache_discrepancy(&self, post: &Posterior) -> Result<f64> {
        let fresh = ChainState::new(post, self.params.clone(), self.latents.clone())?;
        let mut worst: f64 = 0.0;
        for (a, b) in [
            (&self.initial, &fresh.initial),
            (&self.transition, &fresh.transition),
            (&self.observation, &fresh.observation),
        ] {
            worst = worst.max((&a.entries - &b.entries).amax());
            worst = worst.max((a.factor.logdet() - b.factor.logdet()).abs());
        }
        for (a, b) in [
            (self.terms.initial, fresh.terms.initial),
            (self.terms.transition, fresh.terms.transition),
            (self.terms.observation, fresh.terms.observation),
        ] {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
        Ok(worst)
    }
}
