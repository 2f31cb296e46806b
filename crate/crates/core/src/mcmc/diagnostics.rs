use serde::Serialize;

use crate::error::{Error, Result};

use super::chain::{scalar_names, Trace};
use super::prior::KernelParamId;

/// Empirical quantile by linear interpolation between order statistics at
/// position `(N − 1) p` (zero-based) of the sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Summary of one scalar's posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ScalarSummary {
    pub fn from_sample(name: &str, xs: &[f64], level: f64) -> Result<Self> {
        if xs.len() < 2 {
            return Err(Error::Degenerate(format!("{name}: need at least two samples")));
        }
        let s = sorted_copy(xs);
        let a = (1.0 - level) / 2.0;
        Ok(ScalarSummary {
            name: name.to_string(),
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            median: quantile_sorted(&s, 0.5),
            lower: quantile_sorted(&s, a),
            upper: quantile_sorted(&s, 1.0 - a),
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Potential scale reduction from several chains of one scalar. Each chain is
/// split in half and
/// `R̂² = 1 + var(half-chain means) / mean(half-chain variances)`, with both
/// variances taken with divisor equal to the count, so identical halves give
/// exactly 1. `None` when every half is constant or fewer than four draws
/// per chain are available.
pub fn potential_scale_reduction(chains: &[&[f64]]) -> Option<f64> {
    let len = chains.iter().map(|c| c.len()).min()?;
    let half = len / 2;
    if half < 2 {
        return None;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[half..2 * half]);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = halves.iter().zip(&means).map(|(h, &m)| var(h, m)).sum::<f64>() / halves.len() as f64;
    if !(within > 0.0) {
        return None;
    }
    let between = var(&means, mean(&means));
    Some((1.0 + between / within).sqrt())
}

/// Per-parameter summaries, acceptance rates and PSR over several chains.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub level: f64,
    pub chains: usize,
    pub samples_per_chain: Vec<usize>,
    pub summaries: Vec<ScalarSummary>,
    /// PSR per parameter, `None` where undefined.
    pub psr: Vec<(String, Option<f64>)>,
    pub latent_acceptance: Vec<Option<f64>>,
    pub kernel_acceptance: Vec<(String, Option<f64>)>,
}

/// Summaries pool the samples of every chain; acceptance rates pool the
/// counters.
pub fn diagnostics(traces: &[&Trace], level: f64) -> Result<DiagnosticsReport> {
    if traces.is_empty() || traces.iter().any(|t| t.len() < 2) {
        return Err(Error::Degenerate("diagnostics need at least two samples per chain".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput("credible level must lie in (0, 1)".into()));
    }
    let mut summaries = Vec::new();
    let mut psr = Vec::new();
    for name in scalar_names() {
        let per_chain: Vec<Vec<f64>> = traces.iter().map(|t| t.scalar(name).expect("known name")).collect();
        let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
        summaries.push(ScalarSummary::from_sample(name, &pooled, level)?);
        let refs: Vec<&[f64]> = per_chain.iter().map(|c| c.as_slice()).collect();
        psr.push((name.to_string(), potential_scale_reduction(&refs)));
    }
    let blocks = traces[0].acceptance.latent_blocks.len();
    let latent_acceptance = (0..blocks)
        .map(|b| {
            let (p, a) = traces.iter().fold((0, 0), |(p, a), t| {
                let s = t.acceptance.latent_blocks.get(b).copied().unwrap_or_default();
                (p + s.proposed, a + s.accepted)
            });
            (p > 0).then(|| a as f64 / p as f64)
        })
        .collect();
    let kernel_acceptance = KernelParamId::ALL
        .iter()
        .map(|k| {
            let (p, a) = traces.iter().fold((0, 0), |(p, a), t| {
                let s = t.acceptance.kernel[k.index()];
                (p + s.proposed, a + s.accepted)
            });
            (k.name().to_string(), (p > 0).then(|| a as f64 / p as f64))
        })
        .collect();
    Ok(DiagnosticsReport {
        level,
        chains: traces.len(),
        samples_per_chain: traces.iter().map(|t| t.len()).collect(),
        summaries,
        psr,
        latent_acceptance,
        kernel_acceptance,
    })
}
