//! Posterior predictive inference at arbitrary space-time coordinates.
//!
//! A prediction at a site that is not monitored needs that site's latent
//! value, so new sites are appended to the site set before fitting and the
//! sampler carries their whole latent trajectory, with no observations and
//! `μ₀` pinned at 0. Each retained posterior sample then yields one draw from
//! the Gaussian conditional of the target given the observed cells.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::CholeskyFactor;
use crate::mcmc::{quantile_sorted, run_chain_on, sorted_copy, ChainConfig, Posterior, PriorSpec, Trace};
use crate::model::{sigma_feps_over, LatentField, ModelParams, ObservationGrid, Point, SiteSet};
use crate::simulate::simulate_with_rng;

/// Why a coordinate is being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    NewSite,
    LeaveOneOut,
    MissingCell,
}

/// A space-time coordinate to predict; `time` runs over `1..=T+1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionTarget {
    pub site: Point,
    pub time: usize,
    pub kind: TargetKind,
}

/// Posterior predictive sample of one target, in trace order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub samples: Vec<f64>,
    pub target: PredictionTarget,
    /// Draws whose conditional variance came out negative and was set to 0.
    pub clamped: usize,
}

/// Site set and time range of a fit that carries prediction targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedLayout {
    /// Monitored sites first, then one entry per distinct new site.
    pub sites: SiteSet,
    pub monitored: usize,
    /// Number of observed time steps.
    pub t_obs: usize,
    /// Time steps carried by the latent field: `t_obs`, or `t_obs + 1` when
    /// a target extrapolates one step ahead.
    pub t_max: usize,
    /// Latent row of each target, in target order.
    pub target_rows: Vec<usize>,
    /// Targets whose site coincides with a monitored site.
    pub collapsed: Vec<usize>,
}

impl AugmentedLayout {
    /// The observation grid over the augmented layout: new sites and an
    /// extrapolated layer are entirely missing.
    pub fn extend_grid(&self, y: &ObservationGrid) -> Result<ObservationGrid> {
        if y.n() != self.monitored || y.t_max() != self.t_obs {
            return Err(Error::Config(format!(
                "grid is {}x{} but the layout expects {}x{}",
                y.n(),
                y.t_max(),
                self.monitored,
                self.t_obs
            )));
        }
        ObservationGrid::from_options(self.sites.n(), self.t_max, |i, t| {
            (i < self.monitored && t <= self.t_obs).then(|| y.get(i, t)).flatten()
        })
    }
}

/// Extends the monitored sites with the targets' sites. Targets at a
/// monitored coordinate reuse that site's latent row; targets sharing a new
/// coordinate share one row.
pub fn augment_target_latents(targets: &[PredictionTarget], s: &SiteSet, t_obs: usize) -> Result<AugmentedLayout> {
    for (a, ta) in targets.iter().enumerate() {
        if ta.time == 0 || ta.time > t_obs + 1 {
            return Err(Error::InvalidInput(format!(
                "target time {} outside 1..={}",
                ta.time,
                t_obs + 1
            )));
        }
        if ta.site.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("target coordinates must be finite".into()));
        }
        if targets[..a].iter().any(|tb| tb.site == ta.site && tb.time == ta.time) {
            return Err(Error::InvalidInput(format!("duplicate target at {:?}, t = {}", ta.site, ta.time)));
        }
    }
    let mut coords = s.coords.clone();
    let mut target_rows = Vec::with_capacity(targets.len());
    let mut collapsed = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        let row = match coords.iter().position(|c| *c == t.site) {
            Some(r) => {
                if r < s.n() {
                    collapsed.push(k);
                    if t.kind == TargetKind::NewSite {
                        log::warn!("target {k} sits on monitored site {r}; using its latent row");
                    }
                }
                r
            }
            None => {
                coords.push(t.site);
                coords.len() - 1
            }
        };
        target_rows.push(row);
    }
    let t_max = if targets.iter().any(|t| t.time > t_obs) { t_obs + 1 } else { t_obs };
    Ok(AugmentedLayout {
        sites: SiteSet { coords },
        monitored: s.n(),
        t_obs,
        t_max,
        target_rows,
        collapsed,
    })
}

/// The Gaussian conditional of unobserved outputs given one posterior
/// sample and a set of observed cells.
pub struct Conditioner<'a> {
    x: &'a LatentField,
    p: &'a ModelParams,
    s: &'a SiteSet,
    cells: Vec<(usize, usize)>,
    factor: CholeskyFactor,
    /// `Σ₂₂⁻¹ V`
    alpha: Vec<f64>,
}

impl<'a> Conditioner<'a> {
    /// Conditions on every observed cell of `y` except `exclude`.
    pub fn new(
        x: &'a LatentField,
        p: &'a ModelParams,
        s: &'a SiteSet,
        y: &ObservationGrid,
        exclude: Option<(usize, usize)>,
    ) -> Result<Self> {
        if y.n() != x.n() || y.t_max() != x.t_max() || s.n() != x.n() {
            return Err(Error::Config("latent field, sites and grid disagree in shape".into()));
        }
        let cells: Vec<(usize, usize)> = y.observed_cells().into_iter().filter(|&c| Some(c) != exclude).collect();
        if cells.is_empty() {
            return Err(Error::Degenerate("no observed cells to condition on".into()));
        }
        let gram = sigma_feps_over(x, p, s, &cells).map_err(|e| e.within("predictive conditioning covariance"))?;
        let (_, factor) = gram.into_parts();
        let v: Vec<f64> = cells
            .iter()
            .map(|&(i, t)| y.values[(i, t - 1)] - p.beta0f - p.beta1f * x.get(i, t))
            .collect();
        let alpha = factor.solve_slice(&v);
        Ok(Conditioner {
            x,
            p,
            s,
            cells,
            factor,
            alpha,
        })
    }

    /// Conditional mean and (unclamped) variance of `y(site, t)`.
    pub fn moments(&self, site: usize, t: usize) -> (f64, f64) {
        let p = self.p;
        let xs = self.x.get(site, t);
        let here = &self.s.coords[site];
        let mut k12: Vec<f64> = self
            .cells
            .iter()
            .map(|&(i, ti)| {
                let f = p.kf.cov_scalar(xs, self.x.get(i, ti));
                if ti == t {
                    f + p.keps.cov_planar(here, &self.s.coords[i])
                } else {
                    f
                }
            })
            .collect();
        let mean = p.beta0f + p.beta1f * xs + k12.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        self.factor.forward_in_place(&mut k12);
        let total = p.kf.variance + p.keps.variance;
        let var = total * (1.0 + p.jitter) - k12.iter().map(|v| v * v).sum::<f64>();
        (mean, var)
    }
}

/// Conditional mean and variance of `y(site, t)` given the observed cells of
/// `y` other than `exclude`, for one latent field and parameter value.
pub fn predictive_moments(
    x_aug: &LatentField,
    p: &ModelParams,
    s: &SiteSet,
    y: &ObservationGrid,
    site: usize,
    t: usize,
    exclude: Option<(usize, usize)>,
) -> Result<(f64, f64)> {
    if site >= x_aug.n() || t == 0 || t > x_aug.t_max() {
        return Err(Error::InvalidInput(format!("target ({site}, {t}) outside the latent field")));
    }
    Ok(Conditioner::new(x_aug, p, s, y, exclude)?.moments(site, t))
}

fn gaussian_draw<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> (f64, bool) {
    let clamped = var < 0.0;
    let z: f64 = rng.sample(StandardNormal);
    (mean + var.max(0.0).sqrt() * z, clamped)
}

/// One predictive draw of `y(site, t)`. The flag reports whether the
/// conditional variance had to be clamped at 0.
pub fn predictive_draw<R: Rng + ?Sized>(
    x_aug: &LatentField,
    p: &ModelParams,
    s: &SiteSet,
    y: &ObservationGrid,
    site: usize,
    t: usize,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let (m, v) = predictive_moments(x_aug, p, s, y, site, t, None)?;
    Ok(gaussian_draw(m, v, rng))
}

fn check_trace_layout(trace: &Trace, sites: &SiteSet, y: &ObservationGrid) -> Result<()> {
    if trace.meta.n_sites != sites.n() || trace.meta.t_max != y.t_max() || y.n() != sites.n() {
        return Err(Error::Config(format!(
            "trace covers {} sites and T = {}, expected {} sites and T = {}",
            trace.meta.n_sites,
            trace.meta.t_max,
            sites.n(),
            y.t_max()
        )));
    }
    Ok(())
}

/// One predictive draw per retained sample for each target. `sites` and
/// `y_aug` describe the augmented layout the trace was fitted on.
pub fn posterior_predictive<R: Rng + ?Sized>(
    targets: &[PredictionTarget],
    layout: &AugmentedLayout,
    trace: &Trace,
    y_aug: &ObservationGrid,
    rng: &mut R,
) -> Result<Vec<PredictiveDraws>> {
    if layout.target_rows.len() != targets.len() {
        return Err(Error::Config("layout was built for a different target list".into()));
    }
    check_trace_layout(trace, &layout.sites, y_aug)?;
    let mut out: Vec<PredictiveDraws> = targets
        .iter()
        .map(|&target| PredictiveDraws {
            samples: Vec::with_capacity(trace.len()),
            target,
            clamped: 0,
        })
        .collect();
    for (j, sample) in trace.samples.iter().enumerate() {
        let cond = Conditioner::new(&sample.latents, &sample.params, &layout.sites, y_aug, None)
            .map_err(|e| e.within(format!("posterior sample {j}")))?;
        for (k, d) in out.iter_mut().enumerate() {
            let (m, v) = cond.moments(layout.target_rows[k], d.target.time);
            let (draw, clamped) = gaussian_draw(m, v, rng);
            d.samples.push(draw);
            d.clamped += clamped as usize;
        }
    }
    Ok(out)
}

/// Central interval and median of a predictive sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn shifted(&self, by: f64) -> Interval {
        Interval {
            lower: self.lower + by,
            median: self.median + by,
            upper: self.upper + by,
        }
    }
}

/// Minimum sample size accepted by [`interval`].
pub const MIN_INTERVAL_DRAWS: usize = 20;

/// Quantiles `(1−level)/2`, `1/2` and `1−(1−level)/2`, each by linear
/// interpolation of the order statistics at position `(N − 1) q`.
pub fn interval(draws: &[f64], level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput("interval level must lie in (0, 1)".into()));
    }
    if draws.len() < MIN_INTERVAL_DRAWS {
        return Err(Error::Degenerate(format!(
            "an interval needs at least {MIN_INTERVAL_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("non-finite predictive draw".into()));
    }
    let s = sorted_copy(draws);
    let a = (1.0 - level) / 2.0;
    Ok(Interval {
        lower: quantile_sorted(&s, a),
        median: quantile_sorted(&s, 0.5),
        upper: quantile_sorted(&s, 1.0 - a),
    })
}

/// Leave-one-out outcome at one observed cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooCell {
    pub site: usize,
    pub t: usize,
    pub observed: f64,
    pub interval: Interval,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub hits: usize,
    pub total: usize,
    pub mean_interval_length: f64,
    pub cells: Vec<LooCell>,
    pub clamped: usize,
}

impl LooReport {
    pub fn coverage(&self) -> f64 {
        self.hits as f64 / self.total as f64
    }

    fn from_cells(cells: Vec<LooCell>, clamped: usize) -> Self {
        let total = cells.len();
        LooReport {
            hits: cells.iter().filter(|c| c.hit).count(),
            total,
            mean_interval_length: cells.iter().map(|c| c.interval.length()).sum::<f64>() / total.max(1) as f64,
            cells,
            clamped,
        }
    }
}

/// Leave-one-out predictive draws for every observed cell from one
/// full-data trace: for each sample, the target cell is dropped from the
/// conditioning set. With `K` the covariance of all observed cells, the
/// conditional of cell `c` given the others has mean
/// `y_c − (K⁻¹V)_c / (K⁻¹)_cc` and variance `1 / (K⁻¹)_cc`.
pub fn loo_draws<R: Rng + ?Sized>(
    data: &ObservationGrid,
    sites: &SiteSet,
    trace: &Trace,
    rng: &mut R,
) -> Result<(Vec<(usize, usize)>, Vec<Vec<f64>>, usize)> {
    check_trace_layout(trace, sites, data)?;
    let cells = data.observed_cells();
    let mut draws = vec![Vec::with_capacity(trace.len()); cells.len()];
    let mut clamped = 0;
    for (j, sample) in trace.samples.iter().enumerate() {
        let cond = Conditioner::new(&sample.latents, &sample.params, sites, data, None)
            .map_err(|e| e.within(format!("posterior sample {j}")))?;
        let kinv = cond.factor.inverse();
        for (c, &(i, t)) in cells.iter().enumerate() {
            let prec = kinv[(c, c)];
            let y = data.values[(i, t - 1)];
            let (draw, cl) = gaussian_draw(y - cond.alpha[c] / prec, 1.0 / prec, rng);
            draws[c].push(draw);
            clamped += cl as usize;
        }
    }
    Ok((cells, draws, clamped))
}

/// Hit count, total and mean interval length of leave-one-out intervals at
/// `level` over every observed cell.
pub fn loo_coverage_report<R: Rng + ?Sized>(
    data: &ObservationGrid,
    sites: &SiteSet,
    trace: &Trace,
    level: f64,
    rng: &mut R,
) -> Result<LooReport> {
    let (cells, draws, clamped) = loo_draws(data, sites, trace, rng)?;
    let mut out = Vec::with_capacity(cells.len());
    for (&(i, t), d) in cells.iter().zip(&draws) {
        let interval = interval(d, level)?;
        let observed = data.values[(i, t - 1)];
        out.push(LooCell {
            site: i,
            t,
            observed,
            interval,
            hit: interval.contains(observed),
        });
    }
    Ok(LooReport::from_cells(out, clamped))
}

/// Leave-one-out by refitting: each observed cell is masked in turn and a
/// fresh chain is run without it. Costs one chain per cell.
pub fn loo_refit_report(
    data: &ObservationGrid,
    sites: &SiteSet,
    prior: &PriorSpec,
    cfg: &ChainConfig,
    level: f64,
    seed: u64,
) -> Result<LooReport> {
    let mut out = Vec::new();
    let mut clamped = 0;
    for (k, (i, t)) in data.observed_cells().into_iter().enumerate() {
        let masked = data.masking(i, t);
        let post = Posterior::new(sites.clone(), masked.clone(), prior.clone(), sites.n())?;
        let mut rng = crate::rng::seeded_rng(seed, k as u64);
        let trace = run_chain_on(&post, cfg, Some(seed), &mut rng)?;
        let mut draws = Vec::with_capacity(trace.len());
        for sample in &trace.samples {
            let (m, v) = predictive_moments(&sample.latents, &sample.params, sites, &masked, i, t, None)?;
            let (d, cl) = gaussian_draw(m, v, &mut rng);
            draws.push(d);
            clamped += cl as usize;
        }
        let interval = interval(&draws, level)?;
        let observed = data.values[(i, t - 1)];
        out.push(LooCell {
            site: i,
            t,
            observed,
            interval,
            hit: interval.contains(observed),
        });
    }
    Ok(LooReport::from_cells(out, clamped))
}

/// Predictive draws for every missing cell of `data`, which must be the
/// grid the trace was fitted on.
pub fn impute_missing<R: Rng + ?Sized>(
    data: &ObservationGrid,
    sites: &SiteSet,
    trace: &Trace,
    rng: &mut R,
) -> Result<Vec<PredictiveDraws>> {
    check_trace_layout(trace, sites, data)?;
    let missing = data.missing_cells();
    let mut out: Vec<PredictiveDraws> = missing
        .iter()
        .map(|&(i, t)| PredictiveDraws {
            samples: Vec::with_capacity(trace.len()),
            target: PredictionTarget {
                site: sites.coords[i],
                time: t,
                kind: TargetKind::MissingCell,
            },
            clamped: 0,
        })
        .collect();
    if missing.is_empty() {
        return Ok(out);
    }
    for (j, sample) in trace.samples.iter().enumerate() {
        let cond = Conditioner::new(&sample.latents, &sample.params, sites, data, None)
            .map_err(|e| e.within(format!("posterior sample {j}")))?;
        for (d, &(i, t)) in out.iter_mut().zip(&missing) {
            let (m, v) = cond.moments(i, t);
            let (draw, clamped) = gaussian_draw(m, v, rng);
            d.samples.push(draw);
            d.clamped += clamped as usize;
        }
    }
    Ok(out)
}

/// A space-time coordinate: planar site and time `t ≥ 1`.
pub type SpaceTime = (Point, usize);

/// Posterior of the correlation between `y` at two space-time coordinates.
/// For each retained parameter sample, `replicates` datasets are simulated
/// at just the sites involved and the sample correlation of the pair is
/// recorded. A site equal to a monitored site uses its `μ₀` entry, any other
/// site uses 0. Degenerate variances give NaN.
pub fn correlation_posterior<R: Rng + ?Sized>(
    pair: (SpaceTime, SpaceTime),
    sites: &SiteSet,
    trace: &Trace,
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if replicates < 100 {
        return Err(Error::InvalidInput("correlation estimates need at least 100 replicates".into()));
    }
    let ((sa, ta), (sb, tb)) = pair;
    if ta == 0 || tb == 0 {
        return Err(Error::InvalidInput("correlation coordinates need t >= 1".into()));
    }
    if sa == sb && ta == tb {
        return Ok(vec![1.0; trace.len()]);
    }
    let mut coords = vec![sa];
    if sb != sa {
        coords.push(sb);
    }
    let local = SiteSet { coords: coords.clone() };
    let ib = coords.len() - 1;
    let t_max = ta.max(tb);
    let mut out = Vec::with_capacity(trace.len());
    for sample in &trace.samples {
        let mut p = sample.params.clone();
        p.mu0 = coords
            .iter()
            .map(|c| {
                sites.coords.iter().position(|m| m == c).filter(|&r| r < trace.meta.monitored).map_or(0.0, |r| p.mu0[r])
            })
            .collect();
        let mut a = Vec::with_capacity(replicates);
        let mut b = Vec::with_capacity(replicates);
        for _ in 0..replicates {
            let (_, y) = simulate_with_rng(&p, &local, t_max, rng)?;
            a.push(y.values[(0, ta - 1)]);
            b.push(y.values[(ib, tb - 1)]);
        }
        out.push(sample_correlation(&a, &b));
    }
    Ok(out)
}

/// Pearson correlation; NaN when either sample is constant.
pub fn sample_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}
