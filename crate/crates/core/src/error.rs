use serde::{Deserialize, Serialize};
use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("drift evaluated to a non-finite value at {point:?}")]
    NonFiniteDrift { point: Vec<f64> },

    #[error("quadrature did not converge: estimate {estimate:e}, relative change {rel_change:e} after {nodes} nodes")]
    Accuracy {
        estimate: f64,
        rel_change: f64,
        nodes: usize,
    },

    #[error("stationary normalizer is not finite ({estimate}); tail assumptions are violated")]
    Domain { estimate: f64 },

    #[error("value out of floating point range: {0}")]
    Range(String),

    #[error("trajectory left the guard box |x| <= {radius} at step {step}")]
    Explosion { radius: f64, step: usize },

    #[error("transition method `{method}` cannot be used with {reason}")]
    Incompatible { method: String, reason: String },

    #[error("non-finite log density at transition {index}")]
    NonFiniteLikelihood { index: usize },

    #[error("all posterior atoms produced non-finite likelihoods")]
    DegeneratePosterior,

    #[error("covering not achieved within {cap} atoms at (m={m}, l={l})")]
    Capacity { m: usize, l: usize, cap: usize },

    #[error("series ingestion failed at row {row}: {reason}")]
    Ingest { row: usize, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Non-fatal diagnostics attached to numerical results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Kernel density estimate had no endpoints within six bandwidths of the query.
    SparseKernelWindow { bandwidth: f64 },
    /// Importance weights collapsed onto a handful of paths.
    LowEffectiveSampleSize { ess: f64 },
    /// Random-walk Metropolis acceptance outside [0.05, 0.95].
    Acceptance { rate: f64 },
    /// A divergence estimate fell more than three standard errors below zero.
    EstimatorBias { estimate: f64, std_err: f64 },
    /// A quadrature value below zero was clamped.
    Clamped { magnitude: f64 },
    /// A posterior atom had a non-finite likelihood and received weight zero.
    NonFiniteAtom { index: usize },
    /// Prior mass outside the truncated (m, l) range was renormalized away.
    Truncated { mass: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SparseKernelWindow { bandwidth } => {
                write!(f, "no kernel endpoints within 6 bandwidths (h = {bandwidth:e})")
            }
            Warning::LowEffectiveSampleSize { ess } => {
                write!(f, "effective sample size {ess:.2} below 10")
            }
            Warning::Acceptance { rate } => write!(f, "metropolis acceptance rate {rate:.3}"),
            Warning::EstimatorBias { estimate, std_err } => write!(
                f,
                "estimate {estimate:e} is more than 3 standard errors ({std_err:e}) below zero"
            ),
            Warning::Clamped { magnitude } => write!(f, "clamped {magnitude:e} to zero"),
            Warning::NonFiniteAtom { index } => {
                write!(f, "atom {index} had a non-finite likelihood")
            }
            Warning::Truncated { mass } => write!(f, "renormalized truncated prior mass {mass:e}"),
        }
    }
}

/// A scalar result with Monte Carlo standard error (zero for deterministic
/// quadrature) and any diagnostics raised while computing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            std_err: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn with_err(value: f64, std_err: f64) -> Self {
        Estimate {
            value,
            std_err,
            warnings: Vec::new(),
        }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Estimate::with_err(f64::NAN, f64::NAN);
        }
        let mean = crate::quadrature::pairwise_sum(samples) / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate::with_err(mean, (var / n).sqrt())
    }
}
