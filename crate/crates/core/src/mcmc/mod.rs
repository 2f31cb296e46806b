//! Metropolis-within-Gibbs posterior sampler.
//!
//! Regression pairs and `μ₀` have Gaussian full conditionals and are drawn
//! exactly; kernel hyperparameters move by random walks on the log scale;
//! each latent time layer moves by one additive transformation step sharing
//! a single `ε`.

mod chain;
mod diagnostics;
mod moves;
mod prior;
mod state;

pub use chain::{
    default_initial_latents, default_initial_params, run_chain, run_chain_on, scalar_getter, scalar_names,
    AcceptanceStats, ChainConfig, MoveStats, Sample, Trace, TraceMeta, BLOCK_TARGET, SCALAR_TARGET,
};
pub use diagnostics::{diagnostics, potential_scale_reduction, quantile_sorted, DiagnosticsReport, ScalarSummary};
pub(crate) use diagnostics::sorted_copy;
pub use moves::{
    accept_log_ratio, additive_displacement, beta_f_conditional, beta_g_conditional, gibbs_update_beta_f,
    gibbs_update_beta_g, gibbs_update_mu0, log_acceptance, log_rwm_step, mh_update_kernel_param, mu0_conditional,
    tmcmc_block_update_latents, tmcmc_step, tmcmc_update_block, BlockScheme, GaussianConditional, TmcmcConfig,
};
pub use prior::{DensityPart, Gaussian2, KernelParamId, LogNormal, PriorSpec};
pub use state::{ChainState, Posterior};
