//! Nonparametric state-space modelling of spatio-temporal data.
//!
//! Observations follow `Y(s,t) = f(X(s,t)) + ε(s,t)` and the latent field
//! evolves as `X(s,t) = g(X(s,t−1)) + η(s,t)`, where `f` and `g` are Gaussian
//! processes on the real line with linear means and `ε`, `η` and the initial
//! layer `X(·,0)` are spatial Gaussian processes. The crate provides the exact
//! log densities, forward simulation, a Metropolis-within-Gibbs sampler with
//! block additive transformation moves for the latent field, and posterior
//! predictive inference.

pub mod error;
pub mod kernels;
pub mod mcmc;
pub mod model;
pub mod pipeline;
pub mod predict;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
