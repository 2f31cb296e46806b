use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelParams;
use crate::model::{LatentField, ModelParams, ObservationGrid, SiteSet};

use super::moves::{
    gibbs_update_beta_f, gibbs_update_beta_g, gibbs_update_mu0, mh_update_kernel_param, tmcmc_update_block,
    TmcmcConfig,
};
use super::prior::{KernelParamId, PriorSpec};
use super::state::{ChainState, Posterior};

/// Acceptance target of scalar Metropolis moves during adaptation.
pub const SCALAR_TARGET: f64 = 0.44;
/// Acceptance target of latent block moves during adaptation.
pub const BLOCK_TARGET: f64 = 0.23;

/// Run length, tuning and starting point of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    #[serde(default)]
    pub tmcmc: TmcmcConfig,
    /// Initial step of the log-scale random walks.
    #[serde(default = "default_kernel_step")]
    pub kernel_step: f64,
    /// Robbins–Monro tuning of step sizes during burn-in.
    #[serde(default = "default_true")]
    pub adapt: bool,
    /// Kernel hyperparameters held at their initial values.
    #[serde(default)]
    pub fixed: Vec<KernelParamId>,
    /// Sites whose `μ₀` entry is free; `None` means all of them.
    #[serde(default)]
    pub monitored: Option<usize>,
    #[serde(default)]
    pub initial_params: Option<ModelParams>,
    #[serde(skip)]
    pub initial_latents: Option<LatentField>,
}

fn default_kernel_step() -> f64 {
    0.3
}

fn default_true() -> bool {
    true
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 1000,
            burn_in: 500,
            thin: 1,
            tmcmc: TmcmcConfig::default(),
            kernel_step: default_kernel_step(),
            adapt: true,
            fixed: Vec::new(),
            monitored: None,
            initial_params: None,
            initial_latents: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(Error::Config("burn-in exceeds the number of iterations".into()));
        }
        if !(self.kernel_step > 0.0 && self.kernel_step.is_finite()) {
            return Err(Error::Config("kernel_step must be positive".into()));
        }
        self.tmcmc.validate()
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Proposal and acceptance counts of one move family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Acceptance counts over the whole run, burn-in included.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    /// One entry per latent layer `t = 0..=T`.
    pub latent_blocks: Vec<MoveStats>,
    /// Indexed by [`KernelParamId::index`].
    pub kernel: Vec<MoveStats>,
}

impl AcceptanceStats {
    fn new(blocks: usize) -> Self {
        AcceptanceStats {
            latent_blocks: vec![MoveStats::default(); blocks],
            kernel: vec![MoveStats::default(); KernelParamId::ALL.len()],
        }
    }

    /// Pooled over every latent block.
    pub fn latent(&self) -> MoveStats {
        self.latent_blocks.iter().fold(MoveStats::default(), |a, b| MoveStats {
            proposed: a.proposed + b.proposed,
            accepted: a.accepted + b.accepted,
        })
    }
}

/// Run metadata kept next to the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: Option<u64>,
    pub n_sites: usize,
    pub monitored: usize,
    pub t_max: usize,
    /// Step sizes in force after burn-in.
    pub block_scales: Vec<f64>,
    pub kernel_steps: Vec<f64>,
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub params: ModelParams,
    pub latents: LatentField,
}

/// Retained samples of one chain, in iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub acceptance: AcceptanceStats,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Values of a named scalar across samples; see [`scalar_names`].
    pub fn scalar(&self, name: &str) -> Option<Vec<f64>> {
        let get = scalar_getter(name)?;
        Some(self.samples.iter().map(|s| get(&s.params)).collect())
    }
}

/// Names of the scalar parameters in trace order.
pub fn scalar_names() -> Vec<&'static str> {
    let mut v = vec!["beta0f", "beta1f", "beta0g", "beta1g"];
    v.extend(KernelParamId::ALL.iter().map(|k| k.name()));
    v
}

pub fn scalar_getter(name: &str) -> Option<Box<dyn Fn(&ModelParams) -> f64>> {
    Some(match name {
        "beta0f" => Box::new(|p: &ModelParams| p.beta0f),
        "beta1f" => Box::new(|p: &ModelParams| p.beta1f),
        "beta0g" => Box::new(|p: &ModelParams| p.beta0g),
        "beta1g" => Box::new(|p: &ModelParams| p.beta1g),
        other => {
            let id = KernelParamId::from_name(other)?;
            Box::new(move |p: &ModelParams| id.get(p))
        }
    })
}

/// Starting parameters: regression lines at identity, kernel
/// hyperparameters at their prior medians, `μ₀ = 0`.
pub fn default_initial_params(prior: &PriorSpec, n: usize) -> ModelParams {
    let k = |v: KernelParamId, d: KernelParamId| KernelParams {
        variance: prior.kernel_prior(v).median(),
        decay: prior.kernel_prior(d).median(),
    };
    use KernelParamId::*;
    ModelParams {
        beta0f: 0.0,
        beta1f: 1.0,
        beta0g: 0.0,
        beta1g: 1.0,
        kf: k(SigmaF, LambdaF),
        kg: k(SigmaG, LambdaG),
        keps: k(SigmaEps, LambdaEps),
        keta: k(SigmaEta, LambdaEta),
        k0: k(Sigma0, Lambda0),
        mu0: vec![0.0; n],
        jitter: crate::kernels::DEFAULT_JITTER,
    }
}

/// Starting latent field: observed values where present, otherwise the
/// site's observed mean (the overall mean for sites never observed); the
/// initial layer copies layer 1.
pub fn default_initial_latents(data: &ObservationGrid) -> LatentField {
    let n = data.n();
    let t_max = data.t_max();
    let cells = data.observed_cells();
    let overall = cells.iter().map(|&(i, t)| data.values[(i, t - 1)]).sum::<f64>() / cells.len().max(1) as f64;
    let mut x = DMatrix::zeros(n, t_max + 1);
    for i in 0..n {
        let obs: Vec<f64> = (1..=t_max).filter_map(|t| data.get(i, t)).collect();
        let fill = if obs.is_empty() { overall } else { obs.iter().sum::<f64>() / obs.len() as f64 };
        for t in 1..=t_max {
            x[(i, t)] = data.get(i, t).unwrap_or(fill);
        }
        x[(i, 0)] = x[(i, 1)];
    }
    LatentField { values: x }
}

/// Robbins–Monro step on a log step size.
fn adapt(log_step: &mut f64, accepted: bool, target: f64, k: usize) {
    let gain = (k as f64 + 1.0).powf(-0.6);
    *log_step += gain * (accepted as u8 as f64 - target);
    *log_step = log_step.clamp(-12.0, 5.0);
}

/// Runs the sampler. Each iteration performs, in order: the additive block
/// moves on latent layers `t = 0..=T`; the Gibbs draws of `(β_{0g}, β_{1g})`,
/// `(β_{0f}, β_{1f})` and `μ₀`; then one log-scale Metropolis move for each
/// kernel hyperparameter in [`KernelParamId::ALL`] order. Step sizes adapt
/// during burn-in only.
pub fn run_chain<R: Rng + ?Sized>(
    data: &ObservationGrid,
    sites: &SiteSet,
    prior: &PriorSpec,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<Trace> {
    cfg.validate()?;
    let monitored = cfg.monitored.unwrap_or(sites.n());
    let post = Posterior::new(sites.clone(), data.clone(), prior.clone(), monitored)?;
    run_chain_on(&post, cfg, None, rng)
}

/// As [`run_chain`] on a prepared target; `seed` is only recorded.
pub fn run_chain_on<R: Rng + ?Sized>(
    post: &Posterior,
    cfg: &ChainConfig,
    seed: Option<u64>,
    rng: &mut R,
) -> Result<Trace> {
    cfg.validate()?;
    let n = post.n();
    let t_max = post.t_max();
    let params = match &cfg.initial_params {
        Some(p) => p.clone(),
        None => default_initial_params(&post.prior, n),
    };
    let latents = match &cfg.initial_latents {
        Some(x) => x.clone(),
        None => default_initial_latents(&post.data),
    };
    let mut state = ChainState::new(post, params, latents).map_err(|e| e.within("initial state"))?;

    let fixed: Vec<bool> = KernelParamId::ALL.iter().map(|k| cfg.fixed.contains(k)).collect();
    for id in KernelParamId::ALL {
        if !fixed[id.index()] && !(id.get(state.params()) > 0.0) {
            return Err(Error::Config(format!("{} must start positive to be sampled", id.name())));
        }
    }
    let mut block_log_scale = vec![cfg.tmcmc.epsilon_scale.ln(); t_max + 1];
    let mut kernel_log_step = vec![cfg.kernel_step.ln(); KernelParamId::ALL.len()];
    let mut acceptance = AcceptanceStats::new(t_max + 1);
    let mut samples = Vec::with_capacity(cfg.retained());

    for it in 0..cfg.iterations {
        let adapting = cfg.adapt && it < cfg.burn_in;
        let context = |e: Error| e.within(format!("iteration {it}"));

        for t in 0..=t_max {
            let ok = tmcmc_update_block(
                &mut state,
                post,
                t,
                block_log_scale[t].exp(),
                cfg.tmcmc.sign_probability,
                rng,
            );
            acceptance.latent_blocks[t].record(ok);
            if adapting {
                adapt(&mut block_log_scale[t], ok, BLOCK_TARGET, it);
            }
        }
        gibbs_update_beta_g(&mut state, post, rng).map_err(context)?;
        gibbs_update_beta_f(&mut state, post, rng).map_err(context)?;
        gibbs_update_mu0(&mut state, post, rng).map_err(context)?;
        for id in KernelParamId::ALL {
            if fixed[id.index()] {
                continue;
            }
            let k = id.index();
            let ok = mh_update_kernel_param(&mut state, post, id, kernel_log_step[k].exp(), rng);
            acceptance.kernel[k].record(ok);
            if adapting {
                adapt(&mut kernel_log_step[k], ok, SCALAR_TARGET, it);
            }
        }
        state.iteration = it + 1;

        if cfg!(debug_assertions) && (it + 1) % 1000 == 0 {
            let gap = state.cache_discrepancy(post).map_err(context)?;
            debug_assert!(gap < 1e-10, "cached covariances drifted by {gap} at iteration {it}");
        }
        if it >= cfg.burn_in && (it + 1 - cfg.burn_in) % cfg.thin == 0 {
            samples.push(Sample {
                params: state.params().clone(),
                latents: state.latents().clone(),
            });
        }
    }
    log::debug!(
        "chain finished: latent acceptance {:?}, retained {}",
        acceptance.latent().rate(),
        samples.len()
    );

    Ok(Trace {
        samples,
        acceptance,
        meta: TraceMeta {
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            seed,
            n_sites: n,
            monitored: post.monitored,
            t_max,
            block_scales: block_log_scale.iter().map(|v| v.exp()).collect(),
            kernel_steps: kernel_log_step.iter().map(|v| v.exp()).collect(),
        },
    })
}
