//! Closed forms available when the random parts of `f` and `g` vanish and the
//! model becomes linear-Gaussian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{symmetric_from_fn, CholeskyFactor};

use super::{ModelParams, ObservationGrid, Point, SiteSet};

fn require_linear(p: &ModelParams) -> Result<()> {
    if p.kf.variance != 0.0 || p.kg.variance != 0.0 {
        return Err(Error::Precondition(format!(
            "closed form needs zero process variances for f and g (got {} and {})",
            p.kf.variance, p.kg.variance
        )));
    }
    Ok(())
}

/// `1 + b + … + b^(k-1)`; equals `k` at `b = 1`.
fn geometric_sum(b: f64, k: usize) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for _ in 0..k {
        acc += pow;
        pow *= b;
    }
    acc
}

/// Mean and covariance of the stacked latent states `x(·, 1..=T)` in the
/// linear-Gaussian case.
pub fn latent_linear_moments(p: &ModelParams, s: &SiteSet, t_max: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    require_linear(p)?;
    p.validate(s)?;
    if t_max == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let n = s.n();
    let b = p.beta1g;
    let mut sig0 = symmetric_from_fn(n, |i, j| p.k0.cov_planar(&s.coords[i], &s.coords[j]));
    let mut sig_eta = symmetric_from_fn(n, |i, j| p.keta.cov_planar(&s.coords[i], &s.coords[j]));
    for i in 0..n {
        sig0[(i, i)] += p.jitter * p.k0.variance;
        sig_eta[(i, i)] += p.jitter * p.keta.variance;
    }

    let mean = DVector::from_fn(n * t_max, |a, _| {
        let (t, i) = (a / n + 1, a % n);
        b.powi(t as i32) * p.mu0[i] + p.beta0g * geometric_sum(b, t)
    });
    let cov = symmetric_from_fn(n * t_max, |a, c| {
        let (t1, i) = (a / n + 1, a % n);
        let (t2, j) = (c / n + 1, c % n);
        let lag = t1.abs_diff(t2) as i32;
        // β^(t1+t2-2) + β^(t1+t2-4) + … + β^|t1-t2|, min(t1,t2) terms
        let eta_weight = b.powi(lag) * geometric_sum(b * b, t1.min(t2));
        b.powi((t1 + t2) as i32) * sig0[(i, j)] + eta_weight * sig_eta[(i, j)]
    });
    Ok((mean, cov))
}

/// Mean and covariance of the stacked observations `y(·, 1..=T)` in the
/// linear-Gaussian case.
pub fn closed_form_obs_moments(p: &ModelParams, s: &SiteSet, t_max: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mx, cx) = latent_linear_moments(p, s, t_max)?;
    let n = s.n();
    let mean = mx.map(|m| p.beta0f + p.beta1f * m);
    let b2 = p.beta1f * p.beta1f;
    let cov = symmetric_from_fn(n * t_max, |a, c| {
        let mut v = b2 * cx[(a, c)];
        if a / n == c / n {
            v += p.keps.cov_planar(&s.coords[a % n], &s.coords[c % n]);
            if a == c {
                v += p.jitter * p.keps.variance;
            }
        }
        v
    });
    Ok((mean, cov))
}

/// Exact marginal log density of the observed cells in the linear-Gaussian
/// case.
pub fn closed_form_obs_log_density_linear(y: &ObservationGrid, p: &ModelParams, s: &SiteSet) -> Result<f64> {
    if y.n() != s.n() {
        return Err(Error::InvalidInput("grid and site set disagree on n".into()));
    }
    let (mean, cov) = closed_form_obs_moments(p, s, y.t_max())?;
    let n = s.n();
    let cells = y.observed_cells();
    if cells.is_empty() {
        return Err(Error::Degenerate("every observation is missing".into()));
    }
    let idx: Vec<usize> = cells.iter().map(|&(i, t)| (t - 1) * n + i).collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
    let resid: Vec<f64> = cells
        .iter()
        .zip(&idx)
        .map(|(&(i, t), &k)| y.values[(i, t - 1)] - mean[k])
        .collect();
    let f = CholeskyFactor::new(&sub).map_err(|e| e.within("closed-form observation covariance"))?;
    Ok(f.gaussian_log_density(&resid))
}

/// Approximate covariance of `Y(s,t)` and `Y(s*,t*)` when the process variances
/// of `f` and `g` are small:
///
/// `β_{1f}² β_{1g}^{t−t*} [β_{1g}^{2t*} c₀(s,s*) + (1−β_{1g}^{2t*})/(1−β_{1g}²) c_η(s,s*)] + c_ε(s,s*) δ(t−t*)`
///
/// for `t ≥ t*` (arguments are swapped otherwise). The bracket is the exact
/// contemporaneous latent covariance at time `t*` of the linear recursion.
pub fn approx_covariance_geometric(p: &ModelParams, s: &Point, s_star: &Point, t: usize, t_star: usize) -> Result<f64> {
    let b = p.beta1g;
    if !(b.abs() < 1.0) {
        return Err(Error::Precondition(format!("needs |beta1g| < 1, got {b}")));
    }
    let (t, t_star) = if t >= t_star { (t, t_star) } else { (t_star, t) };
    let c0 = p.k0.cov_planar(s, s_star);
    let ceta = p.keta.cov_planar(s, s_star);
    let b2 = b * b;
    let contemporaneous = b2.powi(t_star as i32) * c0 + (1.0 - b2.powi(t_star as i32)) / (1.0 - b2) * ceta;
    let mut cov = p.beta1f * p.beta1f * b.powi((t - t_star) as i32) * contemporaneous;
    if t == t_star {
        cov += p.keps.cov_planar(s, s_star);
    }
    Ok(cov)
}
