use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::LN_2PI;
use crate::model::ModelParams;

/// Bivariate Gaussian prior on an (intercept, slope) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Gaussian2 {
    pub fn isotropic(variance: f64) -> Self {
        Gaussian2 {
            mean: [0.0, 0.0],
            cov: [[variance, 0.0], [0.0, variance]],
        }
    }

    /// Inverse of the covariance.
    pub fn precision(&self) -> Result<[[f64; 2]; 2]> {
        let [[a, b], [c, d]] = self.cov;
        let det = a * d - b * c;
        if !(a > 0.0 && det > 0.0 && (b - c).abs() <= 1e-12 * a.max(d)) {
            return Err(Error::Config("bivariate prior covariance must be symmetric positive definite".into()));
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }
}

/// Lognormal prior: `ln θ ~ N(location, scale²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub location: f64,
    pub scale: f64,
}

impl LogNormal {
    pub fn new(location: f64, scale: f64) -> Self {
        LogNormal { location, scale }
    }

    /// Log density on the original scale, Jacobian `1/θ` included.
    pub fn log_pdf(&self, theta: f64) -> f64 {
        if !(theta > 0.0) {
            return f64::NEG_INFINITY;
        }
        let z = (theta.ln() - self.location) / self.scale;
        -theta.ln() - self.scale.ln() - 0.5 * LN_2PI - 0.5 * z * z
    }

    pub fn median(&self) -> f64 {
        self.location.exp()
    }

    pub fn mean(&self) -> f64 {
        (self.location + 0.5 * self.scale * self.scale).exp()
    }
}

/// The ten kernel hyperparameters, in sweep order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelParamId {
    SigmaF,
    SigmaG,
    SigmaEps,
    SigmaEta,
    Sigma0,
    LambdaF,
    LambdaG,
    LambdaEps,
    LambdaEta,
    Lambda0,
}

/// Which cached density term a kernel hyperparameter feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityPart {
    Initial,
    Transition,
    Observation,
}

impl KernelParamId {
    pub const ALL: [KernelParamId; 10] = [
        KernelParamId::SigmaF,
        KernelParamId::SigmaG,
        KernelParamId::SigmaEps,
        KernelParamId::SigmaEta,
        KernelParamId::Sigma0,
        KernelParamId::LambdaF,
        KernelParamId::LambdaG,
        KernelParamId::LambdaEps,
        KernelParamId::LambdaEta,
        KernelParamId::Lambda0,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in trace files.
    pub fn name(self) -> &'static str {
        match self {
            KernelParamId::SigmaF => "sigma2_f",
            KernelParamId::SigmaG => "sigma2_g",
            KernelParamId::SigmaEps => "sigma2_eps",
            KernelParamId::SigmaEta => "sigma2_eta",
            KernelParamId::Sigma0 => "sigma2_0",
            KernelParamId::LambdaF => "lambda_f",
            KernelParamId::LambdaG => "lambda_g",
            KernelParamId::LambdaEps => "lambda_eps",
            KernelParamId::LambdaEta => "lambda_eta",
            KernelParamId::Lambda0 => "lambda_0",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn slot(self, p: &mut ModelParams) -> &mut f64 {
        match self {
            KernelParamId::SigmaF => &mut p.kf.variance,
            KernelParamId::SigmaG => &mut p.kg.variance,
            KernelParamId::SigmaEps => &mut p.keps.variance,
            KernelParamId::SigmaEta => &mut p.keta.variance,
            KernelParamId::Sigma0 => &mut p.k0.variance,
            KernelParamId::LambdaF => &mut p.kf.decay,
            KernelParamId::LambdaG => &mut p.kg.decay,
            KernelParamId::LambdaEps => &mut p.keps.decay,
            KernelParamId::LambdaEta => &mut p.keta.decay,
            KernelParamId::Lambda0 => &mut p.k0.decay,
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            KernelParamId::SigmaF => p.kf.variance,
            KernelParamId::SigmaG => p.kg.variance,
            KernelParamId::SigmaEps => p.keps.variance,
            KernelParamId::SigmaEta => p.keta.variance,
            KernelParamId::Sigma0 => p.k0.variance,
            KernelParamId::LambdaF => p.kf.decay,
            KernelParamId::LambdaG => p.kg.decay,
            KernelParamId::LambdaEps => p.keps.decay,
            KernelParamId::LambdaEta => p.keta.decay,
            KernelParamId::Lambda0 => p.k0.decay,
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        *self.slot(p) = value;
    }

    pub fn part(self) -> DensityPart {
        match self {
            KernelParamId::SigmaF | KernelParamId::LambdaF | KernelParamId::SigmaEps | KernelParamId::LambdaEps => {
                DensityPart::Observation
            }
            KernelParamId::SigmaG | KernelParamId::LambdaG | KernelParamId::SigmaEta | KernelParamId::LambdaEta => {
                DensityPart::Transition
            }
            KernelParamId::Sigma0 | KernelParamId::Lambda0 => DensityPart::Initial,
        }
    }
}

/// Prior distribution of all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta_f: Gaussian2,
    pub beta_g: Gaussian2,
    /// Prior variance of each entry of `μ₀` (mean zero, independent).
    pub mu0_variance: f64,
    /// Lognormal priors indexed by [`KernelParamId::index`].
    pub kernel: [LogNormal; 10],
}

impl Default for PriorSpec {
    fn default() -> Self {
        let process = LogNormal::new(0.0, 0.7);
        let noise = LogNormal::new(3.0, 0.1);
        let decay = LogNormal::new(0.0, 0.25);
        PriorSpec {
            beta_f: Gaussian2::isotropic(1000.0),
            beta_g: Gaussian2::isotropic(1000.0),
            mu0_variance: 1.0,
            kernel: [process, process, noise, noise, noise, decay, decay, decay, decay, decay],
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.beta_f.precision()?;
        self.beta_g.precision()?;
        if !(self.mu0_variance > 0.0 && self.mu0_variance.is_finite()) {
            return Err(Error::Config("mu0 prior variance must be positive".into()));
        }
        for (k, ln) in KernelParamId::ALL.iter().zip(&self.kernel) {
            if !(ln.scale > 0.0 && ln.scale.is_finite() && ln.location.is_finite()) {
                return Err(Error::Config(format!("lognormal prior for {} needs a positive scale", k.name())));
            }
        }
        Ok(())
    }

    pub fn kernel_prior(&self, id: KernelParamId) -> &LogNormal {
        &self.kernel[id.index()]
    }
}
