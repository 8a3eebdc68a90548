//! Transition densities `p_b(Delta, x, y)` and operators `P_Delta^b f(x)`.
//!
//! Four methods are available:
//!
//! * `exact_ou`: the Gaussian transition of `b(x) = -beta x`.
//! * `euler_gaussian`: the one-step pseudo-likelihood `N(x + b(x) Delta, Delta I)`.
//! * `mc_kde`: Euler endpoints from `x` with a Gaussian kernel density.
//! * `girsanov_mc`: Brownian paths reweighted by `exp(l_x)`, where
//!   `l_x = sum_k b(x + W_k) . dW_k - 1/2 sum_k |b(x + W_k)|^2 dt`
//!   is the left-point discretization on a shared [`BrownianBundle`].
//!
//! With `n` substeps the Girsanov weight is the exact likelihood ratio of the
//! Euler chain against Brownian motion, so its mean is one and its operator
//! has the Euler chain's expectation.

mod testfn;
mod topology;

pub use testfn::TestFunction;
pub use topology::{
    equicontinuity_probe, identifiability_probe, partition_gaps, small_delta_check, weak_distance,
    CellSign, EquicontinuityRow, GridMeasure, IdentifiabilityReport, PartitionCell, SmallDeltaReport,
    TopologyProbe,
};

use crate::drift::DriftSpec;
use crate::error::{Error, Estimate, Result, Warning};
use crate::quadrature::{for_each_tensor, log_sum_exp, normal_rule, pairwise_sum};
use crate::rng;
use crate::simulate::{simulate_brownian_bundle, BrownianBundle};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Floor applied to every log density.
pub const LOG_DENSITY_FLOOR: f64 = -690.775_527_898_213_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    ExactOu,
    EulerGaussian,
    McKde {
        n_paths: usize,
        #[serde(default = "default_substeps")]
        substeps: usize,
        /// Fixed bandwidth; Silverman's rule per evaluation when absent.
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    GirsanovMc {
        n_paths: usize,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    64
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ExactOu => "exact_ou",
            Method::EulerGaussian => "euler_gaussian",
            Method::McKde { .. } => "mc_kde",
            Method::GirsanovMc { .. } => "girsanov_mc",
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Method::McKde { .. } | Method::GirsanovMc { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
}

impl TransitionModel {
    pub fn new(method: Method, seed: u64) -> Result<Self> {
        let model = TransitionModel { method, seed };
        model.check()?;
        Ok(model)
    }

    pub fn exact_ou() -> Self {
        TransitionModel {
            method: Method::ExactOu,
            seed: 0,
        }
    }

    pub fn euler_gaussian() -> Self {
        TransitionModel {
            method: Method::EulerGaussian,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        match self.method {
            Method::McKde {
                n_paths,
                substeps,
                bandwidth,
            } => {
                check_paths(n_paths, substeps)?;
                if let Some(h) = bandwidth {
                    if !(h.is_finite() && h > 0.0) {
                        return Err(Error::invalid("bandwidth", "must be positive"));
                    }
                }
            }
            Method::GirsanovMc { n_paths, substeps } => check_paths(n_paths, substeps)?,
            Method::ExactOu | Method::EulerGaussian => {}
        }
        Ok(())
    }

    /// The same model with another seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        TransitionModel { seed, ..*self }
    }
}

fn check_paths(n_paths: usize, substeps: usize) -> Result<()> {
    if n_paths < 100 {
        return Err(Error::invalid("n_paths", "must be at least 100"));
    }
    if substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    Ok(())
}

/// A log density with the diagnostics raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub warnings: Vec<Warning>,
}

/// Per-path contributions of a Monte Carlo operator, or an exact value.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSamples {
    Exact(f64),
    PerPath(Vec<f64>),
}

impl OperatorSamples {
    pub fn estimate(&self) -> Estimate {
        match self {
            OperatorSamples::Exact(v) => Estimate::exact(*v),
            OperatorSamples::PerPath(s) => Estimate::from_samples(s),
        }
    }
}

/// `P^a f - P^b f` from paired samples, with the paired standard error.
pub fn paired_difference(a: &OperatorSamples, b: &OperatorSamples) -> Estimate {
    match (a, b) {
        (OperatorSamples::PerPath(sa), OperatorSamples::PerPath(sb)) if sa.len() == sb.len() => {
            let d: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| x - y).collect();
            Estimate::from_samples(&d)
        }
        _ => {
            let ea = a.estimate();
            let eb = b.estimate();
            Estimate::with_err(ea.value - eb.value, ea.std_err.hypot(eb.std_err))
        }
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Gaussian { ou: Option<(f64, f64)> },
    McKde {
        n_paths: usize,
        substeps: usize,
        bandwidth: Option<f64>,
    },
    Girsanov { bundle: BrownianBundle },
}

/// Transition machinery prepared once per `(spec, model, Delta)`.
#[derive(Debug, Clone)]
pub struct TransitionKernel<'a> {
    spec: &'a DriftSpec,
    model: TransitionModel,
    delta: f64,
    inner: Inner,
}

/// Gauss-Hermite order per axis for Gaussian operators; Monte Carlo above three dimensions.
fn gaussian_rule(dim: usize) -> Option<&'static [(f64, f64)]> {
    static RULES: [OnceLock<Vec<(f64, f64)>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let order = match dim {
        1 => 64,
        2 => 24,
        3 => 16,
        _ => return None,
    };
    Some(RULES[dim - 1].get_or_init(|| normal_rule(order)))
}

/// Number of Gaussian draws for exact-method operators above three dimensions.
const GAUSSIAN_MC_DRAWS: usize = 100_000;

impl<'a> TransitionKernel<'a> {
    pub fn new(spec: &'a DriftSpec, model: &TransitionModel, delta: f64) -> Result<Self> {
        model.check()?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", "must be positive and finite"));
        }
        let inner = match model.method {
            Method::ExactOu => {
                let beta = spec.ou_rate().ok_or_else(|| Error::Incompatible {
                    method: "exact_ou".into(),
                    reason: "a drift that is not Ornstein-Uhlenbeck".into(),
                })?;
                let decay = (-beta * delta).exp();
                let var = -(-2.0 * beta * delta).exp_m1() / (2.0 * beta);
                Inner::Gaussian {
                    ou: Some((decay, var)),
                }
            }
            Method::EulerGaussian => Inner::Gaussian { ou: None },
            Method::McKde {
                n_paths,
                substeps,
                bandwidth,
            } => Inner::McKde {
                n_paths,
                substeps,
                bandwidth,
            },
            Method::GirsanovMc { n_paths, substeps } => Inner::Girsanov {
                bundle: simulate_brownian_bundle(spec.dim(), delta, substeps, n_paths, model.seed)?,
            },
        };
        Ok(TransitionKernel {
            spec,
            model: *model,
            delta,
            inner,
        })
    }

    pub fn spec(&self) -> &DriftSpec {
        self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    /// Mean and per-coordinate variance of the Gaussian methods.
    fn gaussian(&self, x: &[f64], ou: Option<(f64, f64)>) -> (Vec<f64>, f64) {
        match ou {
            Some((decay, var)) => (x.iter().map(|v| v * decay).collect(), var),
            None => {
                let b = self.spec.eval(x);
                (
                    x.iter().zip(&b).map(|(xi, bi)| xi + bi * self.delta).collect(),
                    self.delta,
                )
            }
        }
    }

    /// `log p(Delta, x, y)` using the model seed for Monte Carlo methods.
    pub fn log_density(&self, x: &[f64], y: &[f64]) -> Result<LogDensity> {
        self.log_density_seeded(x, y, self.model.seed)
    }

    /// `log p(Delta, x, y)` with an explicit seed for the Monte Carlo endpoints.
    pub fn log_density_seeded(&self, x: &[f64], y: &[f64], seed: u64) -> Result<LogDensity> {
        let value_only = |value: f64| LogDensity {
            value: value.max(LOG_DENSITY_FLOOR),
            warnings: Vec::new(),
        };
        match &self.inner {
            Inner::Gaussian { ou } => {
                let (mean, var) = self.gaussian(x, *ou);
                let sq: f64 = mean.iter().zip(y).map(|(m, yi)| (yi - m).powi(2)).sum();
                let d = self.spec.dim() as f64;
                Ok(value_only(-0.5 * sq / var - 0.5 * d * (2.0 * PI * var).ln()))
            }
            Inner::McKde {
                n_paths,
                substeps,
                bandwidth,
            } => {
                let ends = self.endpoints(x, *n_paths, *substeps, seed);
                Ok(kde_log_density(&ends, self.spec.dim(), y, *bandwidth))
            }
            Inner::Girsanov { .. } => Err(Error::Incompatible {
                method: "girsanov_mc".into(),
                reason: "density evaluation (it only represents operators)".into(),
            }),
        }
    }

    /// `log p(Delta, x, y)` for every point of the flat `ys`, sharing one set of
    /// Monte Carlo endpoints.
    pub fn log_densities(&self, x: &[f64], ys: &[f64], seed: u64) -> Result<Vec<LogDensity>> {
        let dim = self.spec.dim();
        match &self.inner {
            Inner::McKde {
                n_paths,
                substeps,
                bandwidth,
            } => {
                let ends = self.endpoints(x, *n_paths, *substeps, seed);
                let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(&ends, dim));
                Ok(ys
                    .par_chunks_exact(dim)
                    .map(|y| kde_log_density(&ends, dim, y, Some(h)))
                    .collect())
            }
            _ => ys
                .chunks_exact(dim)
                .map(|y| self.log_density_seeded(x, y, seed))
                .collect(),
        }
    }

    /// `n` draws from `p(Delta, x, .)`, flat; Euler endpoints for `mc_kde`.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        let dim = self.spec.dim();
        match &self.inner {
            Inner::Gaussian { ou } => {
                let (mean, var) = self.gaussian(x, *ou);
                let sd = var.sqrt();
                let mut rng = rng::stream(seed, 0);
                let mut out = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    for m in &mean {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        out.push(m + sd * z);
                    }
                }
                Ok(out)
            }
            Inner::McKde { substeps, .. } => Ok(self.endpoints(x, n, *substeps, seed)),
            Inner::Girsanov { .. } => Err(Error::Incompatible {
                method: "girsanov_mc".into(),
                reason: "sampling transitions".into(),
            }),
        }
    }

    /// `p(Delta, x, y)`, strictly positive.
    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<Estimate> {
        let ld = self.log_density(x, y)?;
        Ok(Estimate {
            value: ld.value.exp(),
            std_err: 0.0,
            warnings: ld.warnings,
        })
    }

    /// `P_Delta^b f(x)` with its Monte Carlo standard error.
    pub fn operator(&self, f: &TestFunction, x: &[f64]) -> Result<Estimate> {
        match &self.inner {
            Inner::Girsanov { bundle } => {
                let (values, log_w) = self.girsanov_terms(bundle, f, x);
                let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !shift.is_finite() {
                    return Err(Error::Range("Girsanov log weights".into()));
                }
                let shifted: Vec<f64> = values
                    .iter()
                    .zip(&log_w)
                    .map(|(v, l)| v * (l - shift).exp())
                    .collect();
                let scale = shift.exp();
                let mut est = Estimate::from_samples(&shifted);
                est.value *= scale;
                est.std_err *= scale;
                if !est.value.is_finite() {
                    return Err(Error::Range("Girsanov operator overflowed".into()));
                }
                let ess = effective_sample_size(&log_w);
                if ess < 10.0 {
                    est.warnings.push(Warning::LowEffectiveSampleSize { ess });
                }
                Ok(est)
            }
            _ => Ok(self.operator_samples(f, x)?.estimate()),
        }
    }

    /// Operator contributions suitable for pairing across drifts that share the model seed.
    pub fn operator_samples(&self, f: &TestFunction, x: &[f64]) -> Result<OperatorSamples> {
        let dim = self.spec.dim();
        match &self.inner {
            Inner::Gaussian { ou } => {
                let (mean, var) = self.gaussian(x, *ou);
                let sd = var.sqrt();
                match gaussian_rule(dim) {
                    Some(rule) => {
                        let mut terms = Vec::with_capacity(rule.len().pow(dim as u32));
                        let mut y = vec![0.0; dim];
                        for_each_tensor(rule, dim, |z, w| {
                            for ((yi, m), zi) in y.iter_mut().zip(&mean).zip(z) {
                                *yi = m + sd * zi;
                            }
                            terms.push(w * f.eval(&y));
                        });
                        Ok(OperatorSamples::Exact(pairwise_sum(&terms)))
                    }
                    None => {
                        let mut rng = rng::stream(self.model.seed, 0);
                        let mut y = vec![0.0; dim];
                        let samples = (0..GAUSSIAN_MC_DRAWS)
                            .map(|_| {
                                for (yi, m) in y.iter_mut().zip(&mean) {
                                    let z: f64 = StandardNormal.sample(&mut rng);
                                    *yi = m + sd * z;
                                }
                                f.eval(&y)
                            })
                            .collect();
                        Ok(OperatorSamples::PerPath(samples))
                    }
                }
            }
            Inner::McKde {
                n_paths, substeps, ..
            } => {
                let ends = self.endpoints(x, *n_paths, *substeps, self.model.seed);
                Ok(OperatorSamples::PerPath(
                    ends.chunks_exact(dim).map(|e| f.eval(e)).collect(),
                ))
            }
            Inner::Girsanov { bundle } => {
                let (values, log_w) = self.girsanov_terms(bundle, f, x);
                let samples: Vec<f64> = values
                    .iter()
                    .zip(&log_w)
                    .map(|(v, l)| v * l.exp())
                    .collect();
                if samples.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Range("Girsanov weight overflowed".into()));
                }
                Ok(OperatorSamples::PerPath(samples))
            }
        }
    }

    /// Girsanov log weights `l_x` per path of the kernel's bundle.
    pub fn girsanov_log_weights(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.inner {
            Inner::Girsanov { bundle } => {
                Some(self.girsanov_terms(bundle, &TestFunction::Cos, x).1)
            }
            _ => None,
        }
    }

    /// `(f(x + W_Delta), l_x)` per path.
    fn girsanov_terms(
        &self,
        bundle: &BrownianBundle,
        f: &TestFunction,
        x: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let dim = self.spec.dim();
        let dt = bundle.delta() / bundle.substeps() as f64;
        (0..bundle.n_paths())
            .into_par_iter()
            .map(|p| {
                let mut y = x.to_vec();
                let mut b = vec![0.0; dim];
                let mut l = 0.0;
                for dw in bundle.path(p).chunks_exact(dim) {
                    self.spec.eval_into(&y, &mut b);
                    let mut bb = 0.0;
                    for i in 0..dim {
                        l += b[i] * dw[i];
                        bb += b[i] * b[i];
                        y[i] += dw[i];
                    }
                    l -= 0.5 * bb * dt;
                }
                (f.eval(&y), l)
            })
            .unzip()
    }

    /// Euler endpoints from `x`, flat `[path][coordinate]`.
    ///
    /// Path `p` draws from stream `p` of `seed`. The first coordinate's
    /// terminal Brownian value lies in the `p`-th of `n_paths` equiprobable
    /// strata; its increments form a Brownian bridge to that value.
    pub fn endpoints(&self, x: &[f64], n_paths: usize, substeps: usize, seed: u64) -> Vec<f64> {
        let dim = self.spec.dim();
        let dt = self.delta / substeps as f64;
        let sqrt_dt = dt.sqrt();
        let normal = Normal::standard();
        let mut out = vec![0.0; n_paths * dim];
        out.par_chunks_mut(dim).enumerate().for_each(|(p, end)| {
            let mut rng = rng::stream(seed, p as u64);
            let u = ((p as f64 + rng.random::<f64>()) / n_paths as f64).clamp(1e-300, 1.0 - 1e-16);
            let terminal = self.delta.sqrt() * normal.inverse_cdf(u);
            let mut xi: Vec<f64> = (0..substeps)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sqrt_dt * z
                })
                .collect();
            let correction = (terminal - xi.iter().sum::<f64>()) / substeps as f64;
            xi.iter_mut().for_each(|v| *v += correction);
            let mut y = x.to_vec();
            let mut b = vec![0.0; dim];
            for dw0 in &xi {
                self.spec.eval_into(&y, &mut b);
                y[0] += b[0] * dt + dw0;
                for i in 1..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y[i] += b[i] * dt + sqrt_dt * z;
                }
            }
            end.copy_from_slice(&y);
        });
        out
    }
}

fn effective_sample_size(log_w: &[f64]) -> f64 {
    let lse = log_sum_exp(log_w);
    let doubled: Vec<f64> = log_w.iter().map(|l| 2.0 * l).collect();
    (2.0 * lse - log_sum_exp(&doubled)).exp()
}

/// Silverman's rule `h = sigma (4 / ((d + 2) n))^(1 / (d + 4))`, with `sigma` the
/// mean coordinate standard deviation.
pub fn silverman_bandwidth(ends: &[f64], dim: usize) -> f64 {
    let n = ends.len() / dim;
    let mut sd_sum = 0.0;
    for i in 0..dim {
        let col: Vec<f64> = ends.iter().skip(i).step_by(dim).copied().collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        sd_sum += v.sqrt();
    }
    let sigma = sd_sum / dim as f64;
    sigma * (4.0 / ((dim as f64 + 2.0) * n as f64)).powf(1.0 / (dim as f64 + 4.0))
}

/// Gaussian kernel density of `ends` at `y`, in the log domain and floored.
pub fn kde_log_density(ends: &[f64], dim: usize, y: &[f64], bandwidth: Option<f64>) -> LogDensity {
    let n = ends.len() / dim;
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(ends, dim));
    let window = 36.0 * h * h;
    let mut near = false;
    let exponents: Vec<f64> = ends
        .chunks_exact(dim)
        .map(|e| {
            let sq: f64 = e.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            near |= sq <= window;
            -0.5 * sq / (h * h)
        })
        .collect();
    let log_norm = -(n as f64).ln() - 0.5 * dim as f64 * (2.0 * PI * h * h).ln();
    let value = (log_sum_exp(&exponents) + log_norm).max(LOG_DENSITY_FLOOR);
    let warnings = if near {
        Vec::new()
    } else {
        vec![Warning::SparseKernelWindow { bandwidth: h }]
    };
    LogDensity { value, warnings }
}

/// One-shot `p_b(Delta, x, y)`.
pub fn transition_density(
    spec: &DriftSpec,
    model: &TransitionModel,
    delta: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Estimate> {
    TransitionKernel::new(spec, model, delta)?.density(x, y)
}

/// One-shot `P_Delta^b f(x)`.
pub fn transition_operator(
    spec: &DriftSpec,
    model: &TransitionModel,
    delta: f64,
    f: &TestFunction,
    x: &[f64],
) -> Result<Estimate> {
    TransitionKernel::new(spec, model, delta)?.operator(f, x)
}
