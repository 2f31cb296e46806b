//! Forward simulation from the model and from a fixed nonlinear benchmark.
//!
//! Random functions are never represented on a continuum: `g` and `f` are
//! revealed only at the inputs the simulation asks about, each new batch drawn
//! conditionally on everything revealed so far so that one coherent sample
//! path is used throughout a run.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{symmetric_from_fn, CholeskyFactor, KernelParams, DEFAULT_JITTER};
use crate::model::{sigma0, LatentField, ModelParams, ObservationGrid, SiteSet};
use crate::rng::seeded_rng;

/// Inputs closer than this to a revealed input reuse its stored value.
pub const MERGE_TOLERANCE: f64 = 1e-8;

/// Points at which a random function has been revealed, with its values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpHistory {
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl GpHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn lookup(&self, x: f64) -> Option<f64> {
        self.inputs
            .iter()
            .position(|h| (h - x).abs() < MERGE_TOLERANCE)
            .map(|k| self.outputs[k])
    }
}

/// Linear mean `b0 + b1 x` of a random function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMean {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearMean {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub(crate) fn standard_normals<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Factorizes a conditional covariance, escalating the diagonal jitter a few
/// times when cancellation leaves it numerically indefinite.
fn factor_with_escalation(mut m: DMatrix<f64>, base: f64, what: &str) -> Result<CholeskyFactor> {
    let n = m.nrows();
    let mut added = 0.0;
    let mut jitter = base.max(f64::MIN_POSITIVE);
    let mut last = None;
    for _ in 0..5 {
        for i in 0..n {
            m[(i, i)] += jitter - added;
        }
        added = jitter;
        match CholeskyFactor::new(&m) {
            Ok(f) => return Ok(f),
            Err(e) => last = Some(e),
        }
        jitter *= 100.0;
    }
    Err(last.expect("at least one attempt").within(what))
}

/// Draws a random function jointly at `new_inputs`, conditional on the values
/// already revealed in `history`. Returns the draws and the extended history.
pub fn conditional_gp_draw<R: Rng + ?Sized>(
    history: &GpHistory,
    mean: LinearMean,
    kernel: &KernelParams,
    new_inputs: &[f64],
    jitter: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, GpHistory)> {
    if history.inputs.len() != history.outputs.len() {
        return Err(Error::InvalidInput("history inputs and outputs differ in length".into()));
    }
    if new_inputs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite random-function input".into()));
    }
    kernel.validate()?;

    // Resolve each request to a revealed value or to a fresh unique input.
    enum Slot {
        Known(f64),
        Fresh(usize),
    }
    let mut fresh: Vec<f64> = Vec::new();
    let slots: Vec<Slot> = new_inputs
        .iter()
        .map(|&x| {
            if let Some(v) = history.lookup(x) {
                Slot::Known(v)
            } else if let Some(k) = fresh.iter().position(|f| (f - x).abs() < MERGE_TOLERANCE) {
                Slot::Fresh(k)
            } else {
                fresh.push(x);
                Slot::Fresh(fresh.len() - 1)
            }
        })
        .collect();

    let values = if fresh.is_empty() {
        Vec::new()
    } else if kernel.variance == 0.0 {
        fresh.iter().map(|&x| mean.at(x)).collect()
    } else {
        let abs_jitter = jitter * kernel.variance;
        let mut cond_mean: Vec<f64> = fresh.iter().map(|&x| mean.at(x)).collect();
        let mut cond_cov = symmetric_from_fn(fresh.len(), |a, b| kernel.cov_scalar(fresh[a], fresh[b]));
        if !history.is_empty() {
            let h = history.len();
            let mut k22 = symmetric_from_fn(h, |a, b| kernel.cov_scalar(history.inputs[a], history.inputs[b]));
            for i in 0..h {
                k22[(i, i)] += abs_jitter;
            }
            let f22 = CholeskyFactor::new(&k22).map_err(|e| e.within("random-function history"))?;
            let centered: Vec<f64> = history
                .inputs
                .iter()
                .zip(&history.outputs)
                .map(|(&x, &v)| v - mean.at(x))
                .collect();
            let alpha = f22.solve_slice(&centered);
            // W = L⁻¹ K21, so that K12 K22⁻¹ K21 = Wᵀ W
            let mut w = DMatrix::zeros(h, fresh.len());
            for (a, &xa) in fresh.iter().enumerate() {
                let mut col: Vec<f64> = history.inputs.iter().map(|&hx| kernel.cov_scalar(xa, hx)).collect();
                cond_mean[a] += col.iter().zip(&alpha).map(|(c, al)| c * al).sum::<f64>();
                f22.forward_in_place(&mut col);
                w.column_mut(a).copy_from_slice(&col);
            }
            cond_cov -= w.transpose() * &w;
            // restore exact symmetry after the subtraction
            for a in 0..fresh.len() {
                for b in 0..a {
                    let v = 0.5 * (cond_cov[(a, b)] + cond_cov[(b, a)]);
                    cond_cov[(a, b)] = v;
                    cond_cov[(b, a)] = v;
                }
            }
        }
        let f = factor_with_escalation(cond_cov, abs_jitter, "conditional random-function draw")?;
        let z = standard_normals(fresh.len(), rng);
        let lz = f.mul_lower(&z);
        cond_mean.iter().zip(lz).map(|(m, e)| m + e).collect()
    };

    let draws = slots
        .iter()
        .map(|s| match *s {
            Slot::Known(v) => v,
            Slot::Fresh(k) => values[k],
        })
        .collect();
    let mut updated = history.clone();
    updated.inputs.extend_from_slice(&fresh);
    updated.outputs.extend_from_slice(&values);
    Ok((draws, updated))
}

/// One draw of the initial layer `X(·, 0) ~ N(μ₀, Σ₀)`.
pub fn draw_initial_layer<R: Rng + ?Sized>(p: &ModelParams, s: &SiteSet, rng: &mut R) -> Result<Vec<f64>> {
    p.validate(s)?;
    let g = sigma0(p, s)?;
    let z = standard_normals(s.n(), rng);
    Ok(g.factor().mul_lower(&z).iter().zip(&p.mu0).map(|(e, m)| m + e).collect())
}

/// Zero-mean spatial Gaussian draw over the sites.
fn spatial_noise<R: Rng + ?Sized>(factor: &CholeskyFactor, rng: &mut R) -> Vec<f64> {
    let z = standard_normals(factor.dim(), rng);
    factor.mul_lower(&z)
}

fn spatial_factor(kp: &KernelParams, s: &SiteSet, jitter: f64, what: &str) -> Result<Option<CholeskyFactor>> {
    if kp.variance == 0.0 {
        return Ok(None);
    }
    let m = symmetric_from_fn(s.n(), |i, j| kp.cov_planar(&s.coords[i], &s.coords[j]));
    factor_with_escalation(m, jitter * kp.variance, what).map(Some)
}

/// A simulated latent field together with its observations.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub latent: LatentField,
    pub observed: ObservationGrid,
    pub seed: u64,
}

/// Simulates from the model, drawing randomness from `rng` in this order:
/// the initial layer; then for each `t = 1..=T` the revealed values of `g`
/// followed by the evolution noise; then `f` jointly at all latent values;
/// then the observation noise layer by layer.
pub fn simulate_with_rng<R: Rng + ?Sized>(p: &ModelParams, s: &SiteSet, t_max: usize, rng: &mut R) -> Result<(LatentField, ObservationGrid)> {
    if t_max == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    p.validate(s)?;
    let n = s.n();
    let eta = spatial_factor(&p.keta, s, p.jitter, "evolution noise")?;
    let eps = spatial_factor(&p.keps, s, p.jitter, "observation noise")?;
    let g_mean = LinearMean { intercept: p.beta0g, slope: p.beta1g };
    let f_mean = LinearMean { intercept: p.beta0f, slope: p.beta1f };

    let mut x = DMatrix::zeros(n, t_max + 1);
    let x0 = draw_initial_layer(p, s, rng)?;
    x.column_mut(0).copy_from_slice(&x0);

    let mut g_hist = GpHistory::new();
    for t in 1..=t_max {
        let prev: Vec<f64> = x.column(t - 1).iter().copied().collect();
        let (gv, h) = conditional_gp_draw(&g_hist, g_mean, &p.kg, &prev, p.jitter, rng)
            .map_err(|e| e.within(format!("evolution step {t}")))?;
        g_hist = h;
        let noise = match &eta {
            Some(f) => spatial_noise(f, rng),
            None => vec![0.0; n],
        };
        for i in 0..n {
            x[(i, t)] = gv[i] + noise[i];
        }
    }

    let latent_inputs: Vec<f64> = (1..=t_max).flat_map(|t| x.column(t).iter().copied().collect::<Vec<_>>()).collect();
    let (fv, _) = conditional_gp_draw(&GpHistory::new(), f_mean, &p.kf, &latent_inputs, p.jitter, rng)?;
    let mut y = DMatrix::zeros(n, t_max);
    for t in 1..=t_max {
        let noise = match &eps {
            Some(f) => spatial_noise(f, rng),
            None => vec![0.0; n],
        };
        for i in 0..n {
            y[(i, t - 1)] = fv[(t - 1) * n + i] + noise[i];
        }
    }
    Ok((LatentField::new(x)?, ObservationGrid::full(y)?))
}

/// Simulates a dataset from a fresh generator seeded with `seed`
/// (stream 0); see [`simulate_with_rng`] for the order of draws.
pub fn simulate_dataset(p: &ModelParams, s: &SiteSet, t_max: usize, seed: u64) -> Result<SimulationOutput> {
    let mut rng = seeded_rng(seed, 0);
    let (latent, observed) = simulate_with_rng(p, s, t_max, &mut rng)?;
    Ok(SimulationOutput { latent, observed, seed })
}

/// The nonlinear evolution map of the benchmark generator.
pub fn nonlinear_evolution_truth(x: f64) -> f64 {
    use std::f64::consts::PI;
    -1.1 + 0.5 * x + 3.0 * (PI / 4.0 * x).sin() - 5.0 * (PI / 5.0 * x).sin()
}

/// A parametric nonlinear, non-Gaussian state-space generator unrelated to
/// the Gaussian-process model:
/// `Y = a + b X + ε`, `X(t) = h(X(t−1)) + η` with `h` the fixed map
/// [`nonlinear_evolution_truth`] and `X(·,0) ~ N(0, Σ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearBenchmark {
    pub obs_intercept: f64,
    pub obs_slope: f64,
    pub keps: KernelParams,
    pub keta: KernelParams,
    pub k0: KernelParams,
    pub jitter: f64,
}

impl Default for NonlinearBenchmark {
    fn default() -> Self {
        NonlinearBenchmark {
            obs_intercept: -4.1,
            obs_slope: 0.7,
            keps: KernelParams { variance: 3.0 * 3.0, decay: 6.25 },
            keta: KernelParams { variance: 3.9 * 3.9, decay: 6.25 },
            k0: KernelParams { variance: 3.8 * 3.8, decay: 4.0 },
            jitter: DEFAULT_JITTER,
        }
    }
}

impl NonlinearBenchmark {
    /// Draw order: initial layer, then per time step the evolution noise
    /// followed by the observation noise.
    pub fn simulate_with_rng<R: Rng + ?Sized>(&self, s: &SiteSet, t_max: usize, rng: &mut R) -> Result<(LatentField, ObservationGrid)> {
        if t_max == 0 {
            return Err(Error::InvalidInput("T must be at least 1".into()));
        }
        let n = s.n();
        let init = spatial_factor(&self.k0, s, self.jitter, "initial layer")?;
        let eta = spatial_factor(&self.keta, s, self.jitter, "evolution noise")?;
        let eps = spatial_factor(&self.keps, s, self.jitter, "observation noise")?;
        let draw = |f: &Option<CholeskyFactor>, rng: &mut R| match f {
            Some(f) => spatial_noise(f, rng),
            None => vec![0.0; n],
        };
        let mut x = DMatrix::zeros(n, t_max + 1);
        x.column_mut(0).copy_from_slice(&draw(&init, rng));
        let mut y = DMatrix::zeros(n, t_max);
        for t in 1..=t_max {
            let e = draw(&eta, rng);
            for i in 0..n {
                x[(i, t)] = nonlinear_evolution_truth(x[(i, t - 1)]) + e[i];
            }
            let e = draw(&eps, rng);
            for i in 0..n {
                y[(i, t - 1)] = self.obs_intercept + self.obs_slope * x[(i, t)] + e[i];
            }
        }
        Ok((LatentField::new(x)?, ObservationGrid::full(y)?))
    }

    pub fn simulate(&self, s: &SiteSet, t_max: usize, seed: u64) -> Result<SimulationOutput> {
        let mut rng: ChaCha8Rng = seeded_rng(seed, 0);
        let (latent, observed) = self.simulate_with_rng(s, t_max, &mut rng)?;
        Ok(SimulationOutput { latent, observed, seed })
    }
}

/// Simulates the nonlinear benchmark with its reference constants.
pub fn simulate_nonlinear_benchmark(s: &SiteSet, t_max: usize, seed: u64) -> Result<SimulationOutput> {
    NonlinearBenchmark::default().simulate(s, t_max, seed)
}
