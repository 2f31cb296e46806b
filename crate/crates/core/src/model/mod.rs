//! Data containers for the state-space model and its exact densities.
//!
//! Stacked vectors over the space-time grid are ordered time-major: the cell
//! `(site i, time t)` with `t >= 1` sits at index `(t - 1) * n + i`.

mod density;
mod linear;

pub use density::{
    build_sigma_feps, build_sigma_tilde, obs_log_density_given_state, sigma0, sigma_feps_over,
    state_log_density, transition_residuals, DensityTerms,
};
pub use linear::{
    approx_covariance_geometric, closed_form_obs_log_density_linear, closed_form_obs_moments,
    latent_linear_moments,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelParams, DEFAULT_JITTER};

pub type Point = [f64; 2];

/// Planar monitoring locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    pub coords: Vec<Point>,
}

impl SiteSet {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("a site set needs at least one site".into()));
        }
        if coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("site coordinates must be finite".into()));
        }
        let s = SiteSet { coords };
        for (i, j) in s.duplicates() {
            log::warn!("sites {i} and {j} coincide; their covariances rely on jitter");
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    /// Pairs of sites sharing exact coordinates.
    pub fn duplicates(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.coords.len() {
            for j in i + 1..self.coords.len() {
                if self.coords[i] == self.coords[j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Uniform random sites in the square `[0, side]²`.
    pub fn random_in_square<R: rand::Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Result<Self> {
        let coords = (0..n)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect();
        SiteSet::new(coords)
    }
}

/// Latent states `x(s_i, t)` for `t = 0..=T`; rows are sites, columns times.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub values: DMatrix<f64>,
}

impl LatentField {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() < 2 || values.nrows() == 0 {
            return Err(Error::InvalidInput(
                "a latent field needs at least one site and layers 0..=T with T >= 1".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("latent values must be finite".into()));
        }
        Ok(LatentField { values })
    }

    pub fn zeros(n: usize, t_max: usize) -> Self {
        LatentField {
            values: DMatrix::zeros(n, t_max + 1),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of evolution steps `T`.
    pub fn t_max(&self) -> usize {
        self.values.ncols() - 1
    }

    #[inline]
    pub fn get(&self, site: usize, t: usize) -> f64 {
        self.values[(site, t)]
    }

    pub fn layer(&self, t: usize) -> Vec<f64> {
        self.values.column(t).iter().copied().collect()
    }

    /// Layers `from..=to` stacked time-major.
    pub fn stacked(&self, from: usize, to: usize) -> Vec<f64> {
        (from..=to).flat_map(|t| self.values.column(t).iter().copied().collect::<Vec<_>>()).collect()
    }
}

/// Observations `y(s_i, t)` for `t = 1..=T` with a missingness mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid {
    /// `n × T`; column `t - 1` holds time `t`. Masked cells hold NaN.
    pub values: DMatrix<f64>,
    /// `true` where the cell is observed.
    pub mask: DMatrix<bool>,
}

impl ObservationGrid {
    /// Fully observed grid.
    pub fn full(values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::with_mask(values, mask)
    }

    /// Cells holding `None` are treated as missing.
    pub fn from_options(n: usize, t_max: usize, cells: impl Fn(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut values = DMatrix::from_element(n, t_max, f64::NAN);
        let mut mask = DMatrix::from_element(n, t_max, false);
        for i in 0..n {
            for t in 1..=t_max {
                if let Some(v) = cells(i, t) {
                    values[(i, t - 1)] = v;
                    mask[(i, t - 1)] = true;
                }
            }
        }
        Self::with_mask(values, mask)
    }

    pub fn with_mask(mut values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() || values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::InvalidInput("observation values and mask must share a nonempty shape".into()));
        }
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if m {
                if !v.is_finite() {
                    return Err(Error::Data("observed cells must be finite".into()));
                }
            } else {
                *v = f64::NAN;
            }
        }
        Ok(ObservationGrid { values, mask })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn t_max(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_observed(&self, site: usize, t: usize) -> bool {
        self.mask[(site, t - 1)]
    }

    pub fn get(&self, site: usize, t: usize) -> Option<f64> {
        self.is_observed(site, t).then(|| self.values[(site, t - 1)])
    }

    /// Observed `(site, t)` cells in stacked (time-major) order.
    pub fn observed_cells(&self) -> Vec<(usize, usize)> {
        self.cells_where(true)
    }

    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        self.cells_where(false)
    }

    fn cells_where(&self, observed: bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 1..=self.t_max() {
            for i in 0..self.n() {
                if self.mask[(i, t - 1)] == observed {
                    out.push((i, t));
                }
            }
        }
        out
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Copy with one extra cell masked out.
    pub fn masking(&self, site: usize, t: usize) -> Self {
        let mut g = self.clone();
        g.mask[(site, t - 1)] = false;
        g.values[(site, t - 1)] = f64::NAN;
        g
    }
}

/// All model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta0f: f64,
    pub beta1f: f64,
    pub beta0g: f64,
    pub beta1g: f64,
    /// Kernel of the observational function `f`.
    pub kf: KernelParams,
    /// Kernel of the evolution function `g`.
    pub kg: KernelParams,
    /// Spatial kernel of the observation noise.
    pub keps: KernelParams,
    /// Spatial kernel of the evolution noise.
    pub keta: KernelParams,
    /// Spatial kernel of the initial layer.
    pub k0: KernelParams,
    /// Mean of the initial layer at every site.
    pub mu0: Vec<f64>,
    /// Relative diagonal jitter: each covariance gets `jitter × (its
    /// diagonal variance)` added to the diagonal.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl ModelParams {
    /// The true parameters of the reference simulation study: 15 sites,
    /// 20 time points. Scale values there are standard deviations.
    pub fn reference_study(mu0: Vec<f64>) -> Self {
        let k = |sd: f64, decay: f64| KernelParams {
            variance: sd * sd,
            decay,
        };
        ModelParams {
            beta0f: -4.1,
            beta1f: 0.51,
            beta0g: 5.1,
            beta1g: 0.64,
            kf: k(1.0, 4.3),
            kg: k(1.0, 2.4),
            keps: k(4.0, 6.25),
            keta: k(4.9, 6.25),
            k0: k(5.8, 4.0),
            mu0,
            jitter: DEFAULT_JITTER,
        }
    }

    /// Linear-Gaussian parameters of the dynamic linear model: identity
    /// regressions and no random component in `f` or `g`.
    pub fn dynamic_linear(keps: KernelParams, keta: KernelParams, k0: KernelParams, mu0: Vec<f64>) -> Self {
        let zero = KernelParams {
            variance: 0.0,
            decay: 1.0,
        };
        ModelParams {
            beta0f: 0.0,
            beta1f: 1.0,
            beta0g: 0.0,
            beta1g: 1.0,
            kf: zero,
            kg: zero,
            keps,
            keta,
            k0,
            mu0,
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn validate(&self, sites: &SiteSet) -> Result<()> {
        for kp in [&self.kf, &self.kg, &self.keps, &self.keta, &self.k0] {
            kp.validate()?;
        }
        let betas = [self.beta0f, self.beta1f, self.beta0g, self.beta1g];
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("regression coefficients must be finite".into()));
        }
        if self.mu0.len() != sites.n() {
            return Err(Error::InvalidInput(format!(
                "mu0 has {} entries but there are {} sites",
                self.mu0.len(),
                sites.n()
            )));
        }
        if self.mu0.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("mu0 must be finite".into()));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidInput("jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_field(x: &LatentField, p: &ModelParams, s: &SiteSet) -> Result<()> {
    p.validate(s)?;
    if x.n() != s.n() {
        return Err(Error::InvalidInput(format!(
            "latent field has {} sites but the site set has {}",
            x.n(),
            s.n()
        )));
    }
    Ok(())
}
