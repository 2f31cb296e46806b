//! C interface to the `stgp` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` style
//! functions and released by the matching `*_free`. Every fallible function
//! returns an [`StgpStatus`]; on failure a description is available from
//! [`stgp_last_error`] on the same thread. Output pointers are written only
//! on success.
//!
//! Matrices are row-major by site: latent fields are `n × (T+1)` with
//! `x[i*(T+1) + t]`, observation grids are `n × T` with `y[i*T + (t−1)]` and
//! NaN marking a missing cell.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use layout::{grid_from_rows, latent_from_rows};
use stgp::mcmc::{run_chain, ChainConfig, PriorSpec, Trace};
use stgp::model::{
    approx_covariance_geometric, obs_log_density_given_state, state_log_density, ModelParams,
    ObservationGrid, SiteSet,
};
use stgp::pipeline::lambert_project;
use stgp::predict::loo_coverage_report;
use stgp::rng::seeded_rng;
use stgp::simulate::simulate_dataset;
use stgp::Error;

/// Row-major buffers to library types.
mod layout {
    use stgp::model::{LatentField, ObservationGrid};
    use stgp::Result;

    pub fn latent_from_rows(v: &[f64], n: usize, t_max: usize) -> Result<LatentField> {
        let mut x = LatentField::zeros(n, t_max);
        for i in 0..n {
            for t in 0..=t_max {
                x.values[(i, t)] = v[i * (t_max + 1) + t];
            }
        }
        LatentField::new(x.values)
    }

    pub fn grid_from_rows(v: &[f64], n: usize, t_max: usize) -> Result<ObservationGrid> {
        ObservationGrid::from_options(n, t_max, |i, t| {
            let y = v[i * t_max + t - 1];
            (!y.is_nan()).then_some(y)
        })
    }
}

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StgpStatus {
    Ok = 0,
    /// A null pointer, bad string or out-of-range argument.
    InvalidArgument = 1,
    /// Inconsistent configuration or a violated precondition.
    Config = 2,
    /// A covariance matrix could not be factorized or a result degenerated.
    Numerical = 3,
    /// Unusable input data.
    Data = 4,
    /// An internal error; the library state is unaffected.
    Panic = 5,
}

/// Sites on the projected plane.
pub struct StgpSites(SiteSet);

/// Model parameters.
pub struct StgpParams(ModelParams);

/// Observation grid with missing cells.
pub struct StgpGrid(ObservationGrid);

/// Retained posterior samples of a fitted chain.
pub struct StgpTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> StgpStatus {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Precondition(_) => StgpStatus::Config,
        Error::IllConditioned { .. } | Error::Degenerate(_) => StgpStatus::Numerical,
        Error::InvalidInput(_) => StgpStatus::InvalidArgument,
        _ => StgpStatus::Data,
    }
}

struct Fail(StgpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(StgpStatus::InvalidArgument, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> StgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            StgpStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            StgpStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn stgp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a site set from `n` interleaved `(x, y)` pairs.
///
/// # Safety
/// `xy` must point to `2n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_sites_new(xy: *const f64, n: usize, out: *mut *mut StgpSites) -> StgpStatus {
    guard(|| {
        let v = slice(xy, 2 * n, "xy")?;
        let sites = SiteSet::new(v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())?;
        write_out(out, Box::into_raw(Box::new(StgpSites(sites))), "out")
    })
}

/// # Safety
/// `sites` must come from [`stgp_sites_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stgp_sites_free(sites: *mut StgpSites) {
    if !sites.is_null() {
        drop(Box::from_raw(sites));
    }
}

/// Parameters of the reference simulation study with the given `μ₀`.
///
/// # Safety
/// `mu0` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_params_reference(mu0: *const f64, n: usize, out: *mut *mut StgpParams) -> StgpStatus {
    guard(|| {
        let mu0 = slice(mu0, n, "mu0")?.to_vec();
        write_out(out, Box::into_raw(Box::new(StgpParams(ModelParams::reference_study(mu0)))), "out")
    })
}

/// Parameters from a JSON object with the fields of the library's
/// `ModelParams`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_params_from_json(json: *const c_char, out: *mut *mut StgpParams) -> StgpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Fail(StgpStatus::InvalidArgument, "json is not UTF-8".into()))?;
        let p: ModelParams = serde_json::from_str(text).map_err(Error::from)?;
        write_out(out, Box::into_raw(Box::new(StgpParams(p))), "out")
    })
}

/// # Safety
/// `params` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stgp_params_free(params: *mut StgpParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Creates an `n × t_max` grid; NaN entries are missing.
///
/// # Safety
/// `values` must point to `n * t_max` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_grid_new(
    values: *const f64,
    n: usize,
    t_max: usize,
    out: *mut *mut StgpGrid,
) -> StgpStatus {
    guard(|| {
        let v = slice(values, n * t_max, "values")?;
        let g = grid_from_rows(v, n, t_max)?;
        write_out(out, Box::into_raw(Box::new(StgpGrid(g))), "out")
    })
}

/// # Safety
/// `grid` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stgp_grid_free(grid: *mut StgpGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Log joint density of the latent field `x` (`n × (t_max+1)`).
///
/// # Safety
/// Handles must be valid; `x` must point to `n * (t_max+1)` doubles.
#[no_mangle]
pub unsafe extern "C" fn stgp_state_log_density(
    params: *const StgpParams,
    sites: *const StgpSites,
    x: *const f64,
    t_max: usize,
    out: *mut f64,
) -> StgpStatus {
    guard(|| {
        let s = &handle(sites, "sites")?.0;
        let p = &handle(params, "params")?.0;
        let x = latent_from_rows(slice(x, s.n() * (t_max + 1), "x")?, s.n(), t_max)?;
        write_out(out, state_log_density(&x, p, s)?, "out")
    })
}

/// Log density of the observed cells of `grid` given the latent field `x`.
///
/// # Safety
/// Handles must be valid; `x` must point to `n * (T+1)` doubles where `T`
/// is the grid's time length.
#[no_mangle]
pub unsafe extern "C" fn stgp_obs_log_density(
    params: *const StgpParams,
    sites: *const StgpSites,
    grid: *const StgpGrid,
    x: *const f64,
    out: *mut f64,
) -> StgpStatus {
    guard(|| {
        let s = &handle(sites, "sites")?.0;
        let p = &handle(params, "params")?.0;
        let y = &handle(grid, "grid")?.0;
        let t_max = y.t_max();
        let x = latent_from_rows(slice(x, s.n() * (t_max + 1), "x")?, s.n(), t_max)?;
        write_out(out, obs_log_density_given_state(y, &x, p, s)?, "out")
    })
}

/// Simulates `t_max` steps. Writes the latent field to `latent_out`
/// (`n × (t_max+1)`) and the observations to `obs_out` (`n × t_max`).
///
/// # Safety
/// Handles must be valid; the output buffers must hold the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn stgp_simulate(
    params: *const StgpParams,
    sites: *const StgpSites,
    t_max: usize,
    seed: u64,
    latent_out: *mut f64,
    obs_out: *mut f64,
) -> StgpStatus {
    guard(|| {
        let s = &handle(sites, "sites")?.0;
        let p = &handle(params, "params")?.0;
        let n = s.n();
        let lat = slice_mut(latent_out, n * (t_max + 1), "latent_out")?;
        let obs = slice_mut(obs_out, n * t_max, "obs_out")?;
        let sim = simulate_dataset(p, s, t_max, seed)?;
        for i in 0..n {
            for t in 0..=t_max {
                lat[i * (t_max + 1) + t] = sim.latent.get(i, t);
            }
            for t in 1..=t_max {
                obs[i * t_max + t - 1] = sim.observed.values[(i, t - 1)];
            }
        }
        Ok(())
    })
}

/// Runs the sampler with the default priors and tuning.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_fit(
    grid: *const StgpGrid,
    sites: *const StgpSites,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    out: *mut *mut StgpTrace,
) -> StgpStatus {
    guard(|| {
        let s = &handle(sites, "sites")?.0;
        let y = &handle(grid, "grid")?.0;
        let cfg = ChainConfig {
            iterations,
            burn_in,
            thin,
            ..Default::default()
        };
        let mut rng = seeded_rng(seed, 0);
        let trace = run_chain(y, s, &PriorSpec::default(), &cfg, &mut rng)?;
        write_out(out, Box::into_raw(Box::new(StgpTrace(trace))), "out")
    })
}

/// Number of retained samples.
///
/// # Safety
/// `trace` must be a valid handle or null (giving 0).
#[no_mangle]
pub unsafe extern "C" fn stgp_trace_len(trace: *const StgpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the samples of the scalar parameter `name` (for example
/// `"beta1g"` or `"sigma2_f"`) into `buf`, which holds `len` doubles.
///
/// # Safety
/// `trace` must be valid, `name` nul-terminated and `buf` writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_trace_scalar(
    trace: *const StgpTrace,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> StgpStatus {
    guard(|| {
        let t = &handle(trace, "trace")?.0;
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name).to_str().unwrap_or("");
        let v = t
            .scalar(name)
            .ok_or_else(|| Fail(StgpStatus::InvalidArgument, format!("unknown parameter `{name}`")))?;
        if len < v.len() {
            return Err(Fail(
                StgpStatus::InvalidArgument,
                format!("buffer holds {len} values, {} needed", v.len()),
            ));
        }
        slice_mut(buf, v.len(), "buf")?.copy_from_slice(&v);
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stgp_trace_free(trace: *mut StgpTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Leave-one-out coverage of the observed cells at interval `level`.
///
/// # Safety
/// Handles must be valid; the three outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_loo_coverage(
    grid: *const StgpGrid,
    sites: *const StgpSites,
    trace: *const StgpTrace,
    level: f64,
    seed: u64,
    hits: *mut usize,
    total: *mut usize,
    mean_length: *mut f64,
) -> StgpStatus {
    guard(|| {
        let s = &handle(sites, "sites")?.0;
        let y = &handle(grid, "grid")?.0;
        let t = &handle(trace, "trace")?.0;
        if hits.is_null() || total.is_null() || mean_length.is_null() {
            return Err(null("an output"));
        }
        let mut rng = seeded_rng(seed, 2);
        let r = loo_coverage_report(y, s, t, level, &mut rng)?;
        hits.write(r.hits);
        total.write(r.total);
        mean_length.write(r.mean_interval_length);
        Ok(())
    })
}

/// Lambert equal-area projection of longitude `psi` and latitude `phi`
/// (radians).
///
/// # Safety
/// `x` and `y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stgp_lambert_project(psi: f64, phi: f64, x: *mut f64, y: *mut f64) -> StgpStatus {
    guard(|| {
        let p = lambert_project(psi, phi)?;
        write_out(x, p[0], "x")?;
        write_out(y, p[1], "y")
    })
}

/// Geometric approximation of `Cov(Y(s,t), Y(s*,t*))`.
///
/// # Safety
/// `params` must be valid; `s` and `s_star` must point to 2 doubles each.
#[no_mangle]
pub unsafe extern "C" fn stgp_approx_covariance(
    params: *const StgpParams,
    s: *const f64,
    s_star: *const f64,
    t: usize,
    t_star: usize,
    out: *mut f64,
) -> StgpStatus {
    guard(|| {
        let p = &handle(params, "params")?.0;
        let a = slice(s, 2, "s")?;
        let b = slice(s_star, 2, "s_star")?;
        let v = approx_covariance_geometric(p, &[a[0], a[1]], &[b[0], b[1]], t, t_star)?;
        write_out(out, v, "out")
    })
}
