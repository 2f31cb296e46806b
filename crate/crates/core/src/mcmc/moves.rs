use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::CholeskyFactor;
use crate::simulate::standard_normals;

use super::prior::{DensityPart, Gaussian2, KernelParamId};
use super::state::{
    build_initial, build_observation, build_transition, initial_term, observation_term, transition_term, ChainState,
    Posterior,
};

/// How latent coordinates are grouped into additive blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockScheme {
    /// One block per time layer `t = 0..=T`, each sharing a single `ε`.
    #[default]
    PerTime,
}

/// Additive transformation move settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmcmcConfig {
    /// Scale of the half-Gaussian draw of `ε`.
    pub epsilon_scale: f64,
    /// Probability that a coordinate moves by `−ε`.
    pub sign_probability: f64,
    #[serde(default)]
    pub block_scheme: BlockScheme,
}

impl Default for TmcmcConfig {
    fn default() -> Self {
        TmcmcConfig {
            epsilon_scale: 0.5,
            sign_probability: 0.5,
            block_scheme: BlockScheme::PerTime,
        }
    }
}

impl TmcmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_scale > 0.0 && self.epsilon_scale.is_finite()) {
            return Err(Error::Config("epsilon_scale must be positive".into()));
        }
        if !(self.sign_probability > 0.0 && self.sign_probability < 1.0) {
            return Err(Error::Config("sign_probability must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Metropolis decision in the log domain: accept when `ln u < log_ratio`.
pub fn accept_log_ratio<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// `min(0, Δ log target + log proposal ratio)`.
pub fn log_acceptance(current: f64, proposed: f64, log_proposal_ratio: f64) -> f64 {
    let d = proposed - current + log_proposal_ratio;
    if d.is_nan() {
        f64::NEG_INFINITY
    } else {
        d.min(0.0)
    }
}

/// One additive transformation displacement: a single `ε > 0` drawn as
/// `|N(0, scale²)|`, applied as `−ε` with probability `sign_probability` and
/// `+ε` otherwise on each coordinate. Also returns the log ratio of reverse
/// to forward proposal probabilities, which vanishes at probability 1/2.
pub fn additive_displacement<R: Rng + ?Sized>(
    dim: usize,
    scale: f64,
    sign_probability: f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let eps = (scale * rng.sample::<f64, _>(StandardNormal)).abs();
    let odds = (sign_probability / (1.0 - sign_probability)).ln();
    let mut log_q = 0.0;
    let disp = (0..dim)
        .map(|_| {
            if rng.random::<f64>() < sign_probability {
                log_q -= odds;
                -eps
            } else {
                log_q += odds;
                eps
            }
        })
        .collect();
    (disp, log_q)
}

/// Additive transformation step on an arbitrary log target. `log_p` holds the
/// target at `x` and is updated on acceptance.
pub fn tmcmc_step<R: Rng + ?Sized, F: FnMut(&[f64]) -> f64>(
    x: &mut [f64],
    log_p: &mut f64,
    mut log_target: F,
    scale: f64,
    sign_probability: f64,
    rng: &mut R,
) -> bool {
    let (disp, log_q) = additive_displacement(x.len(), scale, sign_probability, rng);
    let prop: Vec<f64> = x.iter().zip(&disp).map(|(a, d)| a + d).collect();
    let lp = log_target(&prop);
    if accept_log_ratio(log_acceptance(*log_p, lp, log_q), rng) {
        x.copy_from_slice(&prop);
        *log_p = lp;
        true
    } else {
        false
    }
}

/// Random-walk step on `ln θ` for a positive scalar with log target
/// `log_target(θ)` on the original scale; the `θ'/θ` Jacobian enters the
/// ratio.
pub fn log_rwm_step<R: Rng + ?Sized, F: FnMut(f64) -> f64>(
    theta: &mut f64,
    log_p: &mut f64,
    mut log_target: F,
    step: f64,
    rng: &mut R,
) -> bool {
    let z: f64 = rng.sample(StandardNormal);
    let prop = *theta * (step * z).exp();
    if !(prop > 0.0 && prop.is_finite()) {
        return false;
    }
    let lp = log_target(prop);
    let jac = prop.ln() - theta.ln();
    if accept_log_ratio(log_acceptance(*log_p, lp, jac), rng) {
        *theta = prop;
        *log_p = lp;
        true
    } else {
        false
    }
}

/// Factorizes a precision matrix and returns the factor and the mean
/// `P⁻¹ b`.
fn gaussian_from_precision(prec: &DMatrix<f64>, b: &[f64], what: &str) -> Result<(CholeskyFactor, Vec<f64>)> {
    let f = CholeskyFactor::new(prec).map_err(|e| e.within(what))?;
    let mean = f.solve_slice(b);
    Ok((f, mean))
}

/// `mean + L⁻ᵀ z` with `P = L Lᵀ`, a draw from `N(mean, P⁻¹)`.
fn draw_from_precision<R: Rng + ?Sized>(f: &CholeskyFactor, mean: &[f64], rng: &mut R) -> Vec<f64> {
    let mut z = standard_normals(mean.len(), rng);
    f.backward_in_place(&mut z);
    mean.iter().zip(z).map(|(m, e)| m + e).collect()
}

/// A Gaussian full conditional given by its mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

fn conditional_from_precision(prec: &DMatrix<f64>, b: &[f64], what: &str) -> Result<GaussianConditional> {
    let (f, mean) = gaussian_from_precision(prec, b, what)?;
    Ok(GaussianConditional {
        mean: DVector::from_vec(mean),
        cov: f.inverse(),
    })
}

fn regression_system(
    factor: &CholeskyFactor,
    design: &[f64],
    target: &[f64],
    prior: &Gaussian2,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = target.len();
    let d = DMatrix::from_fn(m, 2, |r, c| if c == 0 { 1.0 } else { design[r] });
    let w = factor.solve_mat(&d);
    let p0 = prior.precision()?;
    let mut prec = d.transpose() * &w;
    let mut b = [0.0; 2];
    for c in 0..2 {
        b[c] = w.column(c).iter().zip(target).map(|(a, y)| a * y).sum::<f64>();
        for k in 0..2 {
            prec[(c, k)] += p0[c][k];
            b[c] += p0[c][k] * prior.mean[k];
        }
    }
    // exact symmetry for the factorization
    let off = 0.5 * (prec[(0, 1)] + prec[(1, 0)]);
    prec[(0, 1)] = off;
    prec[(1, 0)] = off;
    Ok((prec, b.to_vec()))
}

fn beta_g_system(state: &ChainState, post: &Posterior) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let x = state.latents();
    let t_max = x.t_max();
    let lagged = x.stacked(0, t_max - 1);
    let current = x.stacked(1, t_max);
    regression_system(&state.transition.factor, &lagged, &current, &post.prior.beta_g)
}

fn beta_f_system(state: &ChainState, post: &Posterior) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let x = state.latents();
    let cells = post.cells();
    let design: Vec<f64> = cells.iter().map(|&(i, t)| x.get(i, t)).collect();
    let y: Vec<f64> = cells.iter().map(|&(i, t)| post.data.values[(i, t - 1)]).collect();
    regression_system(&state.observation.factor, &design, &y, &post.prior.beta_f)
}

fn mu0_system(state: &ChainState, post: &Posterior) -> (DMatrix<f64>, Vec<f64>) {
    let m = post.monitored;
    let k = state.initial.factor.inverse();
    let x0 = state.latents().layer(0);
    let mut prec = DMatrix::from_fn(m, m, |i, j| k[(i, j)]);
    for i in 0..m {
        prec[(i, i)] += 1.0 / post.prior.mu0_variance;
    }
    let b = (0..m).map(|i| (0..x0.len()).map(|j| k[(i, j)] * x0[j]).sum()).collect();
    (prec, b)
}

/// Full conditional of `(β_{0g}, β_{1g})`.
pub fn beta_g_conditional(state: &ChainState, post: &Posterior) -> Result<GaussianConditional> {
    let (prec, b) = beta_g_system(state, post)?;
    conditional_from_precision(&prec, &b, "evolution regression conditional")
}

/// Full conditional of `(β_{0f}, β_{1f})`.
pub fn beta_f_conditional(state: &ChainState, post: &Posterior) -> Result<GaussianConditional> {
    let (prec, b) = beta_f_system(state, post)?;
    conditional_from_precision(&prec, &b, "observation regression conditional")
}

/// Full conditional of the monitored entries of `μ₀`.
pub fn mu0_conditional(state: &ChainState, post: &Posterior) -> Result<GaussianConditional> {
    let (prec, b) = mu0_system(state, post);
    conditional_from_precision(&prec, &b, "initial-mean conditional")
}

pub fn gibbs_update_beta_g<R: Rng + ?Sized>(state: &mut ChainState, post: &Posterior, rng: &mut R) -> Result<()> {
    let (prec, b) = beta_g_system(state, post)?;
    let (f, mean) = gaussian_from_precision(&prec, &b, "evolution regression conditional")?;
    let draw = draw_from_precision(&f, &mean, rng);
    let p = state.params_mut();
    p.beta0g = draw[0];
    p.beta1g = draw[1];
    state.terms.transition = transition_term(state.latents(), state.params(), &state.transition);
    Ok(())
}

pub fn gibbs_update_beta_f<R: Rng + ?Sized>(state: &mut ChainState, post: &Posterior, rng: &mut R) -> Result<()> {
    let (prec, b) = beta_f_system(state, post)?;
    let (f, mean) = gaussian_from_precision(&prec, &b, "observation regression conditional")?;
    let draw = draw_from_precision(&f, &mean, rng);
    let p = state.params_mut();
    p.beta0f = draw[0];
    p.beta1f = draw[1];
    state.terms.observation = observation_term(state.latents(), state.params(), post, &state.observation);
    Ok(())
}

pub fn gibbs_update_mu0<R: Rng + ?Sized>(state: &mut ChainState, post: &Posterior, rng: &mut R) -> Result<()> {
    let (prec, b) = mu0_system(state, post);
    let (f, mean) = gaussian_from_precision(&prec, &b, "initial-mean conditional")?;
    let draw = draw_from_precision(&f, &mean, rng);
    state.params_mut().mu0[..post.monitored].copy_from_slice(&draw);
    state.terms.initial = initial_term(state.latents(), state.params(), &state.initial);
    Ok(())
}

/// Log-scale random-walk Metropolis update of one kernel hyperparameter.
/// Proposals whose covariance fails to factorize are rejected.
pub fn mh_update_kernel_param<R: Rng + ?Sized>(
    state: &mut ChainState,
    post: &Posterior,
    which: KernelParamId,
    step: f64,
    rng: &mut R,
) -> bool {
    let current = which.get(state.params());
    let z: f64 = rng.sample(StandardNormal);
    let proposed = current * (step * z).exp();
    if !(proposed > 0.0 && proposed.is_finite()) {
        return false;
    }
    let mut p = state.params().clone();
    which.set(&mut p, proposed);
    let x = state.latents();
    let part = which.part();
    let built = match part {
        DensityPart::Initial => build_initial(&p, post).map(|c| {
            let t = initial_term(x, &p, &c);
            (c, t)
        }),
        DensityPart::Transition => build_transition(x, &p, post).map(|c| {
            let t = transition_term(x, &p, &c);
            (c, t)
        }),
        DensityPart::Observation => build_observation(x, &p, post).map(|c| {
            let t = observation_term(x, &p, post, &c);
            (c, t)
        }),
    };
    let Ok((cache, term)) = built else {
        return false;
    };
    let prior = post.prior.kernel_prior(which);
    let old = *state.term_mut(part) + prior.log_pdf(current);
    let new = term + prior.log_pdf(proposed);
    let jac = proposed.ln() - current.ln();
    if accept_log_ratio(log_acceptance(old, new, jac), rng) {
        which.set(state.params_mut(), proposed);
        *state.cache_mut(part) = cache;
        *state.term_mut(part) = term;
        true
    } else {
        false
    }
}

/// Additive transformation move on the whole latent layer `t`.
pub fn tmcmc_update_block<R: Rng + ?Sized>(
    state: &mut ChainState,
    post: &Posterior,
    t: usize,
    scale: f64,
    sign_probability: f64,
    rng: &mut R,
) -> bool {
    let n = post.n();
    let t_max = post.t_max();
    let (disp, log_q) = additive_displacement(n, scale, sign_probability, rng);
    let mut x = state.latents().clone();
    for (i, d) in disp.iter().enumerate() {
        x.values[(i, t)] += d;
    }
    let p = state.params();
    let mut terms = state.terms;

    if t == 0 {
        terms.initial = initial_term(&x, p, &state.initial);
    }
    // Σ̃ reads the lagged layers 0..T-1
    let new_transition = if t < t_max && p.kg.variance > 0.0 {
        match build_transition(&x, p, post) {
            Ok(c) => Some(c),
            Err(_) => return false,
        }
    } else {
        None
    };
    terms.transition = transition_term(&x, p, new_transition.as_ref().unwrap_or(&state.transition));

    let mut new_observation = None;
    if t >= 1 && post.has_observations_at(t) {
        if p.kf.variance > 0.0 {
            match build_observation(&x, p, post) {
                Ok(c) => new_observation = Some(c),
                Err(_) => return false,
            }
        }
        terms.observation = observation_term(&x, p, post, new_observation.as_ref().unwrap_or(&state.observation));
    }

    if !accept_log_ratio(log_acceptance(state.terms.total(), terms.total(), log_q), rng) {
        return false;
    }
    state.set_latents(x);
    state.terms = terms;
    if let Some(c) = new_transition {
        state.transition = c;
    }
    if let Some(c) = new_observation {
        state.observation = c;
    }
    true
}

/// One pass of block moves over `t = 0..=T` at the configured scale.
/// Returns the acceptance indicator of every block.
pub fn tmcmc_block_update_latents<R: Rng + ?Sized>(
    state: &mut ChainState,
    post: &Posterior,
    cfg: &TmcmcConfig,
    rng: &mut R,
) -> Vec<bool> {
    (0..=post.t_max())
        .map(|t| tmcmc_update_block(state, post, t, cfg.epsilon_scale, cfg.sign_probability, rng))
        .collect()
}
