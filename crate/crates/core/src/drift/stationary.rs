//! Stationary laws, scale functions and stationary sampling.
//!
//! In one dimension `pi_b(x) = exp(Phi(x)) / m_b` with `Phi(x) = 2 int_0^x b`
//! and `m_b = int exp(Phi)`. For gradient drifts `b = -grad V` in any dimension
//! `pi_b = exp(-2V) / C_b`. Normalizers are always carried in the log domain.

use super::{norm_sq, DriftSpec};
use crate::error::{Error, Estimate, Result, Warning};
use crate::points::Points;
use crate::quadrature::{legendre_panels, log_sum_exp, pairwise_sum, simpson_weights};
use crate::rng;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    /// Tensor Simpson for `d <= 3`, importance sampling above.
    #[default]
    Auto,
    Tensor,
    ImportanceSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Domain half-width `L`; defaults to the radius where the declared
    /// dissipativity forces `exp(-2V)` below `e^-50` of its value at `M`.
    pub half_width: Option<f64>,
    /// Relative change between node doublings accepted as converged.
    pub tolerance: f64,
    /// Starting number of Simpson intervals per axis.
    pub initial_intervals: usize,
    /// Interval cap per axis; tensor grids are further capped at 2048 (d = 2) and 512 (d = 3).
    pub max_intervals: usize,
    pub method: QuadratureMethod,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            half_width: None,
            tolerance: 1e-8,
            initial_intervals: 512,
            max_intervals: 1 << 20,
            method: QuadratureMethod::Auto,
            mc_samples: 200_000,
            seed: 0,
        }
    }
}

impl QuadratureConfig {
    fn half_width_for(&self, spec: &DriftSpec) -> f64 {
        self.half_width.unwrap_or_else(|| {
            let d = spec.dissipativity();
            (d.m.powf(d.alpha) + 25.0 * d.alpha / d.r).powf(1.0 / d.alpha)
        })
    }

    fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        if let Some(l) = self.half_width {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid("half_width", "must be positive and finite"));
            }
        }
        if self.initial_intervals < 2 || self.initial_intervals % 2 == 1 {
            return Err(Error::invalid("initial_intervals", "must be even and at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// Simpson nodes `-L + k h`, with `Phi` and the normalized CDF at each node.
    OneDim {
        half_width: f64,
        h: f64,
        phi: Vec<f64>,
        weights: Vec<f64>,
        cdf: Vec<f64>,
    },
    Tensor {
        half_width: f64,
        intervals: usize,
    },
    Importance {
        samples: Points,
        /// Self-normalized weights.
        weights: Vec<f64>,
    },
}

/// The invariant law `mu_b` with density `pi_b`.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    spec: DriftSpec,
    log_normalizer: f64,
    normalizer_std_err: f64,
    repr: Repr,
    warnings: Vec<Warning>,
}

impl StationaryLaw {
    /// Dispatches to [`stationary_density_1d`] when `d = 1` and to
    /// [`stationary_density_potential`] otherwise.
    pub fn new(spec: &DriftSpec, config: &QuadratureConfig) -> Result<Self> {
        if spec.dim() == 1 {
            stationary_density_1d(spec, config)
        } else {
            stationary_density_potential(spec, config)
        }
    }

    pub fn spec(&self) -> &DriftSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `log m_b` in one dimension, `log C_b` for gradient drifts.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// The normalizer with its Monte Carlo standard error (zero under quadrature).
    pub fn normalizer(&self) -> Estimate {
        Estimate::with_err(self.log_normalizer.exp(), self.normalizer_std_err)
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    /// Quadrature half-width `L`; `None` under importance sampling.
    pub fn half_width(&self) -> Option<f64> {
        match &self.repr {
            Repr::OneDim { half_width, .. } | Repr::Tensor { half_width, .. } => Some(*half_width),
            Repr::Importance { .. } => None,
        }
    }

    /// Quadrature nodes per axis, or the number of importance samples.
    pub fn nodes(&self) -> usize {
        match &self.repr {
            Repr::OneDim { phi, .. } => phi.len(),
            Repr::Tensor { intervals, .. } => intervals + 1,
            Repr::Importance { samples, .. } => samples.len(),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match &self.repr {
            Repr::OneDim {
                half_width, h, phi, ..
            } => {
                let k = (((x[0] + half_width) / h).round().max(0.0) as usize).min(phi.len() - 1);
                let node = -half_width + k as f64 * h;
                let b = |y: f64| 2.0 * self.spec.eval1(y);
                phi[k] + legendre_panels(b, node, x[0], *h) - self.log_normalizer
            }
            _ => {
                let v = self.spec.potential(x).expect("gradient drift");
                -2.0 * v - self.log_normalizer
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// `E_mu[g]` by the law's own quadrature, or self-normalized importance
    /// sampling in high dimension.
    pub fn expect<G>(&self, g: G) -> Estimate
    where
        G: Fn(&[f64]) -> f64 + Sync,
    {
        match &self.repr {
            Repr::OneDim {
                half_width,
                h,
                phi,
                weights,
                ..
            } => {
                let terms: Vec<f64> = phi
                    .iter()
                    .zip(weights)
                    .enumerate()
                    .map(|(k, (p, w))| {
                        let x = -half_width + k as f64 * h;
                        let mass = w * (p - self.log_normalizer).exp();
                        if mass == 0.0 {
                            0.0
                        } else {
                            mass * g(&[x])
                        }
                    })
                    .collect();
                Estimate::exact(pairwise_sum(&terms))
            }
            Repr::Tensor {
                half_width,
                intervals,
            } => {
                let log_norm = self.log_normalizer;
                let spec = &self.spec;
                let value = tensor_reduce(spec.dim(), *half_width, *intervals, |x| {
                    let mass = (-2.0 * spec.potential(x).unwrap() - log_norm).exp();
                    if mass == 0.0 {
                        0.0
                    } else {
                        mass * g(x)
                    }
                });
                Estimate::exact(value)
            }
            Repr::Importance { samples, weights } => {
                let values: Vec<f64> = samples.iter().map(&g).collect();
                let terms: Vec<f64> = weights.iter().zip(&values).map(|(w, v)| w * v).collect();
                let mean = pairwise_sum(&terms);
                let var: f64 = weights
                    .iter()
                    .zip(&values)
                    .map(|(w, v)| (w * (v - mean)).powi(2))
                    .sum();
                Estimate::with_err(mean, var.sqrt())
            }
        }
    }

    /// Inverse of the one-dimensional quadrature CDF, exact for a density
    /// that is linear within each Simpson interval.
    fn quantile(&self, u: f64) -> f64 {
        let Repr::OneDim {
            half_width, h, phi, cdf, ..
        } = &self.repr
        else {
            unreachable!("quantile is one-dimensional")
        };
        let k = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
        let p0 = (phi[k] - self.log_normalizer).exp();
        let p1 = (phi[k + 1] - self.log_normalizer).exp();
        let target = (u - cdf[k]).max(0.0);
        // Solve p0 t + (p1 - p0) t^2 / (2h) = target for t in [0, h].
        let a = 0.5 * (p1 - p0) / h;
        let t = if a.abs() < 1e-14 * p0.max(1e-300) {
            target / p0.max(1e-300)
        } else {
            let disc = (p0 * p0 + 4.0 * a * target).max(0.0);
            2.0 * target / (p0 + disc.sqrt())
        };
        -half_width + k as f64 * h + t.clamp(0.0, *h)
    }
}

/// `Phi(x_k) = 2 int_0^{x_k} b` at the nodes `-L + k h`, integrating outward from the centre node.
fn phi_on_nodes(spec: &DriftSpec, half_width: f64, intervals: usize) -> Vec<f64> {
    let h = 2.0 * half_width / intervals as f64;
    let centre = intervals / 2;
    let b = |y: f64| 2.0 * spec.eval1(y);
    let node = |k: usize| -half_width + k as f64 * h;
    let mut phi = vec![0.0; intervals + 1];
    for k in centre..intervals {
        phi[k + 1] = phi[k] + legendre_panels(b, node(k), node(k + 1), h);
    }
    for k in (1..=centre).rev() {
        phi[k - 1] = phi[k] + legendre_panels(b, node(k), node(k - 1), h);
    }
    phi
}

fn converged(previous: f64, current: f64, tolerance: f64) -> bool {
    ((current - previous).abs()) <= tolerance * current.abs().max(f64::MIN_POSITIVE)
}

/// One-dimensional stationary law by composite Simpson quadrature of `exp(Phi)`
/// with node doubling.
pub fn stationary_density_1d(spec: &DriftSpec, config: &QuadratureConfig) -> Result<StationaryLaw> {
    if spec.dim() != 1 {
        return Err(Error::invalid("dim", "stationary_density_1d needs d = 1"));
    }
    config.check()?;
    let half_width = config.half_width_for(spec);
    let mut intervals = config.initial_intervals;
    let mut previous: Option<f64> = None;
    loop {
        let phi = phi_on_nodes(spec, half_width, intervals);
        let h = 2.0 * half_width / intervals as f64;
        let weights = simpson_weights(intervals, h);
        if let Some(k) = phi.iter().position(|p| p.is_nan()) {
            return Err(Error::NonFiniteDrift {
                point: vec![-half_width + k as f64 * h],
            });
        }
        let terms: Vec<f64> = phi.iter().zip(&weights).map(|(p, w)| p + w.ln()).collect();
        let log_norm = log_sum_exp(&terms);
        if !log_norm.is_finite() {
            return Err(Error::Domain { estimate: log_norm.exp() });
        }
        let norm = log_norm.exp();
        let done = previous.is_some_and(|p| converged(p, norm, config.tolerance));
        if done {
            let cdf = trapezoid_cdf(&phi, h, log_norm);
            return Ok(StationaryLaw {
                spec: spec.clone(),
                log_normalizer: log_norm,
                normalizer_std_err: 0.0,
                repr: Repr::OneDim {
                    half_width,
                    h,
                    phi,
                    weights,
                    cdf,
                },
                warnings: Vec::new(),
            });
        }
        if intervals * 2 > config.max_intervals {
            let p = previous.unwrap_or(f64::NAN);
            return Err(Error::Accuracy {
                estimate: norm,
                rel_change: (norm - p).abs() / norm,
                nodes: intervals + 1,
            });
        }
        previous = Some(norm);
        intervals *= 2;
    }
}

/// Cumulative trapezoid CDF of the normalized density, rescaled to end at 1.
fn trapezoid_cdf(phi: &[f64], h: f64, log_norm: f64) -> Vec<f64> {
    let mut cdf = Vec::with_capacity(phi.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in phi.windows(2) {
        acc += 0.5 * h * ((w[0] - log_norm).exp() + (w[1] - log_norm).exp());
        cdf.push(acc);
    }
    for c in cdf.iter_mut() {
        *c /= acc;
    }
    cdf
}

/// Simpson tensor sum of `f` over `[-L, L]^d` with `intervals` per axis,
/// parallel over the first axis and reduced in a fixed order.
fn tensor_reduce<F>(dim: usize, half_width: f64, intervals: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let h = 2.0 * half_width / intervals as f64;
    let w = simpson_weights(intervals, h);
    let n = intervals + 1;
    let inner = n.pow(dim as u32 - 1);
    let slabs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; dim];
            x[0] = -half_width + i as f64 * h;
            let mut acc = 0.0;
            for flat in 0..inner {
                let mut rest = flat;
                let mut weight = w[i];
                for xj in x.iter_mut().skip(1) {
                    let k = rest % n;
                    *xj = -half_width + k as f64 * h;
                    weight *= w[k];
                    rest /= n;
                }
                acc += weight * f(&x);
            }
            acc
        })
        .collect();
    pairwise_sum(&slabs)
}

fn tensor_cap(dim: usize) -> usize {
    match dim {
        1 => usize::MAX,
        2 => 2048,
        _ => 512,
    }
}

/// Stationary law `exp(-2V) / C_b` of a gradient drift.
pub fn stationary_density_potential(
    spec: &DriftSpec,
    config: &QuadratureConfig,
) -> Result<StationaryLaw> {
    if spec.potential(&vec![0.0; spec.dim()]).is_none() {
        return Err(Error::invalid("form", "needs a gradient drift"));
    }
    config.check()?;
    let use_tensor = match config.method {
        QuadratureMethod::Auto => spec.dim() <= 3,
        QuadratureMethod::Tensor => {
            if spec.dim() > 3 {
                return Err(Error::invalid("method", "tensor quadrature needs d <= 3"));
            }
            true
        }
        QuadratureMethod::ImportanceSampling => false,
    };
    if use_tensor {
        potential_tensor(spec, config)
    } else {
        potential_importance(spec, config)
    }
}

fn potential_tensor(spec: &DriftSpec, config: &QuadratureConfig) -> Result<StationaryLaw> {
    let dim = spec.dim();
    let half_width = config.half_width_for(spec);
    let cap = config.max_intervals.min(tensor_cap(dim));
    let minus_2v = |x: &[f64]| -2.0 * spec.potential(x).unwrap();
    // The integrand peaks where V is smallest; a radial scan bounds the shift.
    let mut shift = f64::NEG_INFINITY;
    let mut e = vec![0.0; dim];
    for k in 0..=4096 {
        let r = half_width * k as f64 / 4096.0;
        for axis in 0..dim {
            for sign in [-1.0, 1.0] {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[axis] = sign * r;
                shift = shift.max(minus_2v(&e));
                e.iter_mut().for_each(|v| *v = sign * r / (dim as f64).sqrt());
                shift = shift.max(minus_2v(&e));
            }
        }
    }
    if !shift.is_finite() {
        return Err(Error::Domain { estimate: f64::NAN });
    }
    let mut intervals = (if dim == 1 { config.initial_intervals } else { 64 }).min(cap);
    let mut previous: Option<f64> = None;
    loop {
        let scaled = tensor_reduce(dim, half_width, intervals, |x| (minus_2v(x) - shift).exp());
        if !(scaled.is_finite() && scaled > 0.0) {
            return Err(Error::Domain {
                estimate: scaled * shift.exp(),
            });
        }
        let log_norm = shift + scaled.ln();
        if previous.is_some_and(|p| converged(p, scaled, config.tolerance)) {
            return Ok(StationaryLaw {
                spec: spec.clone(),
                log_normalizer: log_norm,
                normalizer_std_err: 0.0,
                repr: Repr::Tensor {
                    half_width,
                    intervals,
                },
                warnings: Vec::new(),
            });
        }
        if intervals * 2 > cap {
            let p = previous.unwrap_or(f64::NAN);
            return Err(Error::Accuracy {
                estimate: log_norm.exp(),
                rel_change: (scaled - p).abs() / scaled,
                nodes: intervals + 1,
            });
        }
        previous = Some(scaled);
        intervals *= 2;
    }
}

fn potential_importance(spec: &DriftSpec, config: &QuadratureConfig) -> Result<StationaryLaw> {
    let dim = spec.dim();
    let n = config.mc_samples;
    if n < 2 {
        return Err(Error::invalid("mc_samples", "must be at least 2"));
    }
    let diss = spec.dissipativity();
    // exp(-2V) decays at least like exp(-r|x|^2) when alpha >= 2; the proposal is twice as wide.
    let sigma = if diss.alpha >= 2.0 {
        (1.0 / diss.r).sqrt()
    } else {
        1.0 + diss.m + 1.0 / diss.r
    };
    let log_q_norm = -0.5 * dim as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let chunk = 4096;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(config.seed, b as u64);
            let count = chunk.min(n - b * chunk);
            let mut xs = Vec::with_capacity(count * dim);
            let mut lw = Vec::with_capacity(count);
            for _ in 0..count {
                let start = xs.len();
                for _ in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    xs.push(sigma * z);
                }
                let x = &xs[start..];
                let log_q = log_q_norm - 0.5 * norm_sq(x) / (sigma * sigma);
                lw.push(-2.0 * spec.potential(x).unwrap() - log_q);
            }
            (xs, lw)
        })
        .collect();
    let mut coords = Vec::with_capacity(n * dim);
    let mut log_w = Vec::with_capacity(n);
    for (xs, lw) in blocks {
        coords.extend(xs);
        log_w.extend(lw);
    }
    if let Some(i) = log_w.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFiniteDrift {
            point: coords[i * dim..(i + 1) * dim].to_vec(),
        });
    }
    let lse = log_sum_exp(&log_w);
    let log_norm = lse - (n as f64).ln();
    if !log_norm.is_finite() {
        return Err(Error::Domain {
            estimate: log_norm.exp(),
        });
    }
    let weights: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
    // Raw weights w_i = C * n * wn_i; the mean's standard error follows.
    let c = log_norm.exp();
    let raw: Vec<f64> = weights.iter().map(|w| w * c * n as f64).collect();
    let se = Estimate::from_samples(&raw).std_err;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let mut warnings = Vec::new();
    if ess < 10.0 {
        warnings.push(Warning::LowEffectiveSampleSize { ess });
    }
    Ok(StationaryLaw {
        spec: spec.clone(),
        log_normalizer: log_norm,
        normalizer_std_err: se,
        repr: Repr::Importance {
            samples: Points::from_flat(dim, coords),
            weights,
        },
        warnings,
    })
}

/// Scale function `s_b(y) = int_0^y exp(-Phi(z)) dz`, strictly increasing in `y`.
pub fn scale_function(spec: &DriftSpec, y: f64) -> Result<f64> {
    if spec.dim() != 1 {
        return Err(Error::invalid("dim", "the scale function needs d = 1"));
    }
    if !y.is_finite() {
        return Err(Error::invalid("y", "must be finite"));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let sign = y.signum();
    let mut intervals = 64usize;
    let mut previous: Option<f64> = None;
    loop {
        let h = y.abs() / intervals as f64;
        let b = |z: f64| 2.0 * spec.eval1(z);
        let mut phi = 0.0;
        let mut terms = Vec::with_capacity(intervals + 1);
        let weights = simpson_weights(intervals, h);
        for (k, w) in weights.iter().enumerate() {
            if k > 0 {
                let a = sign * (k - 1) as f64 * h;
                phi += legendre_panels(b, a, a + sign * h, h);
            }
            terms.push(-phi + w.ln());
        }
        let log_s = log_sum_exp(&terms);
        if log_s.is_nan() {
            return Err(Error::Range(format!("scale function at y = {y}")));
        }
        if previous.is_some_and(|p| (p - log_s).abs() < 1e-11) {
            let s = log_s.exp();
            if !s.is_finite() {
                return Err(Error::Range(format!(
                    "scale function at y = {y} has log value {log_s}"
                )));
            }
            return Ok(sign * s);
        }
        if intervals >= 1 << 20 {
            return Err(Error::Accuracy {
                estimate: sign * log_s.exp(),
                rel_change: (log_s - previous.unwrap()).abs(),
                nodes: intervals + 1,
            });
        }
        previous = Some(log_s);
        intervals *= 2;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySample {
    pub points: Points,
    pub warnings: Vec<Warning>,
}

/// Draws `n` points from `mu_b`: inverse CDF in one dimension, random-walk
/// Metropolis with step 0.5 targeting `exp(-2V)` otherwise.
pub fn sample_stationary(law: &StationaryLaw, n: usize, seed: u64) -> Result<StationarySample> {
    let dim = law.dim();
    let mut points = Points::with_capacity(dim, n);
    let mut warnings = Vec::new();
    if n == 0 {
        return Ok(StationarySample { points, warnings });
    }
    let mut rng = rng::stream(seed, 0);
    if let Repr::OneDim { .. } = law.repr {
        for _ in 0..n {
            let u: f64 = rng.random();
            points.push(&[law.quantile(u)]);
        }
        return Ok(StationarySample { points, warnings });
    }
    let spec = law.spec();
    let minus_2v = |x: &[f64]| -2.0 * spec.potential(x).expect("gradient drift");
    let burn_in = ((10.0 * (n as f64).sqrt()).ceil() as usize).max(1000);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut current = minus_2v(&x);
    let mut accepted = 0usize;
    for step in 0..burn_in + n {
        for (yi, xi) in y.iter_mut().zip(&x) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *yi = xi + 0.5 * z;
        }
        let proposed = minus_2v(&y);
        let u: f64 = rng.random();
        if u.ln() < proposed - current {
            std::mem::swap(&mut x, &mut y);
            current = proposed;
            if step >= burn_in {
                accepted += 1;
            }
        }
        if step >= burn_in {
            points.push(&x);
        }
    }
    let rate = accepted as f64 / n as f64;
    if !(0.05..=0.95).contains(&rate) {
        warnings.push(Warning::Acceptance { rate });
    }
    Ok(StationarySample { points, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{Dissipativity, DriftForm, PotentialSpec, Profile, ProfileTail, Tabulated};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ou(beta: f64) -> DriftSpec {
        DriftSpec::ou(beta, beta.max(1.0)).unwrap()
    }

    fn gaussian_potential(dim: usize, slope: f64) -> DriftSpec {
        DriftSpec::new(
            dim,
            DriftForm::Potential(PotentialSpec {
                profile: Profile::Linear { slope },
                lipschitz_k2: 2.0 * slope,
                tail: ProfileTail { m_f: 1.0, r_f: slope },
            }),
            2.0 * slope,
            Dissipativity {
                r: 2.0 * slope,
                m: 1.0,
                alpha: if dim == 1 { 1.0 } else { 2.0 },
            },
        )
        .unwrap()
    }

    #[test]
    fn unit_ou_peak_and_normalizer() {
        let law = stationary_density_1d(&ou(1.0), &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(law.density(&[0.0]), 1.0 / PI.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(law.log_normalizer().exp(), PI.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(law.expect(|_| 1.0).value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn density_between_nodes_matches_closed_form() {
        let law = stationary_density_1d(&ou(1.0), &QuadratureConfig::default()).unwrap();
        for x in [-3.3217f64, -0.0123, 0.77, 2.5001] {
            let exact = (-x * x).exp() / PI.sqrt();
            assert_relative_eq!(law.density(&[x]), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn odd_tabulated_drift_gives_even_density() {
        let grid: Vec<f64> = (0..=40).map(|k| -4.0 + 0.2 * k as f64).collect();
        let values = vec![grid.iter().map(|&x: &f64| -x.signum() * x.abs().min(1.0)).collect()];
        let spec = DriftSpec::new(
            1,
            DriftForm::Tabulated(Tabulated { grid, values }),
            1.0,
            Dissipativity {
                r: 1.0,
                m: 1.0,
                alpha: 1.0,
            },
        )
        .unwrap();
        let law = stationary_density_1d(&spec, &QuadratureConfig::default()).unwrap();
        for x in [0.3, 1.0, 2.7, 5.5] {
            assert_relative_eq!(law.density(&[x]), law.density(&[-x]), max_relative = 1e-10);
        }
    }

    #[test]
    fn accuracy_error_when_node_cap_too_low() {
        let cfg = QuadratureConfig {
            initial_intervals: 2,
            max_intervals: 4,
            ..QuadratureConfig::default()
        };
        assert!(matches!(
            stationary_density_1d(&ou(1.0), &cfg),
            Err(Error::Accuracy { .. })
        ));
    }

    #[test]
    fn gaussian_potential_normalizers() {
        let cfg = QuadratureConfig::default();
        let two = stationary_density_potential(&gaussian_potential(2, 0.5), &cfg).unwrap();
        assert_relative_eq!(two.normalizer().value, PI, max_relative = 1e-8);
        let three = stationary_density_potential(&gaussian_potential(3, 0.5), &cfg).unwrap();
        assert_relative_eq!(three.normalizer().value, PI.powf(1.5), max_relative = 1e-8);
        assert_relative_eq!(three.expect(|x| x[0] * x[0]).value, 0.5, max_relative = 1e-8);
    }

    #[test]
    fn importance_sampling_matches_gaussian_integral() {
        let cfg = QuadratureConfig {
            method: QuadratureMethod::ImportanceSampling,
            seed: 5,
            ..QuadratureConfig::default()
        };
        let law = stationary_density_potential(&gaussian_potential(3, 0.5), &cfg).unwrap();
        let c = law.normalizer();
        assert!((c.value - PI.powf(1.5)).abs() < 0.01 * PI.powf(1.5));
        assert!((c.value - PI.powf(1.5)).abs() < 4.0 * c.std_err);
        let second = law.expect(|x| x[1] * x[1]);
        assert!((second.value - 0.5).abs() < 4.0 * second.std_err + 1e-3);
    }

    #[test]
    fn potential_path_reproduces_one_dimensional_path() {
        let cfg = QuadratureConfig::default();
        for beta in [0.5, 1.0, 2.0] {
            let direct = stationary_density_1d(&ou(beta), &cfg).unwrap();
            let via_v = stationary_density_potential(&gaussian_potential(1, beta / 2.0), &cfg).unwrap();
            for k in 0..=80 {
                let x = -4.0 + 0.1 * k as f64;
                assert!((direct.density(&[x]) - via_v.density(&[x])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scale_function_values() {
        let spec = ou(1.0);
        assert_eq!(scale_function(&spec, 0.0).unwrap(), 0.0);
        assert_relative_eq!(scale_function(&spec, 1.0).unwrap(), 1.462_651_745_907_181_6, max_relative = 1e-9);
        assert_relative_eq!(
            scale_function(&spec, -1.0).unwrap(),
            -scale_function(&spec, 1.0).unwrap(),
            epsilon = 1e-12
        );
        assert!(matches!(scale_function(&spec, 40.0), Err(Error::Range(_))));
    }

    #[test]
    fn inverse_cdf_sample_variance() {
        let law = stationary_density_1d(&ou(1.0), &QuadratureConfig::default()).unwrap();
        let s = sample_stationary(&law, 100_000, 3).unwrap();
        let xs: Vec<f64> = s.points.as_flat().to_vec();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((v - 0.5).abs() < 0.01, "variance {v}");
        assert!(sample_stationary(&law, 0, 3).unwrap().points.is_empty());
        assert_eq!(sample_stationary(&law, 50, 9).unwrap(), sample_stationary(&law, 50, 9).unwrap());
    }

    #[test]
    fn metropolis_targets_the_potential_law() {
        let law = stationary_density_potential(&gaussian_potential(2, 0.5), &QuadratureConfig::default())
            .unwrap();
        let s = sample_stationary(&law, 200_000, 4).unwrap();
        assert!(s.warnings.is_empty());
        let second: f64 = s.points.iter().map(|x| x[0] * x[0]).sum::<f64>() / s.points.len() as f64;
        assert!((second - 0.5).abs() < 0.02, "second moment {second}");
        assert_eq!(sample_stationary(&law, 30, 1).unwrap(), sample_stationary(&law, 30, 1).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn one_dimensional_laws_normalize_and_decay(beta in 0.3f64..3.0, amp in 0.0f64..0.2, freq in 0.5f64..3.0) {
            let spec = DriftSpec::new(
                1,
                DriftForm::Parametric1d { id: crate::drift::ParametricId::PerturbedLinear, params: vec![beta, amp, freq] },
                beta + amp,
                Dissipativity { r: beta / 2.0, m: 2.0 * amp / beta + 1.0, alpha: 1.0 },
            ).unwrap();
            let law = stationary_density_1d(&spec, &QuadratureConfig::default()).unwrap();
            prop_assert!((law.expect(|_| 1.0).value - 1.0).abs() < 1e-6);
            let d = spec.dissipativity();
            let mut last = f64::INFINITY;
            for k in 0..200 {
                let x = d.m + 0.05 * k as f64;
                let v = law.log_density(&[x]) + d.r * (x - d.m);
                prop_assert!(v <= last + 1e-9);
                last = v;
            }
        }

        #[test]
        fn scale_function_is_increasing(a in 0.1f64..2.0, c in 0.2f64..2.0, y0 in -3.0f64..3.0, dy in 0.01f64..1.0) {
            let spec = DriftSpec::new(
                1,
                DriftForm::Parametric1d { id: crate::drift::ParametricId::Tanh, params: vec![a, c] },
                a,
                Dissipativity { r: a * 0.5, m: c, alpha: 1.0 },
            ).unwrap();
            prop_assert!(scale_function(&spec, y0 + dy).unwrap() > scale_function(&spec, y0).unwrap());
        }
    }
}
