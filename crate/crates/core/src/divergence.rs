//! Distances and divergences between drifts.
//!
//! For drifts `b, b0` with invariant laws `mu_b, mu_b0` and sampling step `Delta`:
//!
//! * `||b - b0||_{2, mu_b0}` is the `L2(mu_b0)` distance.
//! * `K(mu_b0, mu_b)` is the divergence of the invariant laws.
//! * The path divergence `K(L_b0, L_b)` of the laws of `(X_0, X_[0, Delta])`
//!   equals `K(mu_b0, mu_b) + Delta / 2 ||b - b0||^2_{2, mu_b0}`.
//! * The one-step transition divergence `E_{mu_b0} K(p_b0(Delta, x, .), p_b(Delta, x, .))`
//!   never exceeds `Delta / 2 ||b - b0||^2_{2, mu_b0}`.

use crate::drift::{sample_stationary, DriftSpec, StationaryLaw};
use crate::error::{Error, Estimate, Result, Warning};
use crate::rng;
use crate::simulate::simulate_brownian_bundle;
use crate::transition::{Method, TransitionKernel, TransitionModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn same_dim(b: &DriftSpec, b0: &DriftSpec) -> Result<()> {
    if b.dim() != b0.dim() {
        return Err(Error::invalid("drifts", "dimensions differ"));
    }
    Ok(())
}

/// `||b - b0||_{2, mu_b0}`.
pub fn l2_mu_distance(b: &DriftSpec, b0: &DriftSpec, law0: &StationaryLaw) -> Result<Estimate> {
    same_dim(b, b0)?;
    let sq = law0.expect(|x| {
        let (p, q) = (b.eval(x), b0.eval(x));
        p.iter().zip(&q).map(|(u, v)| (u - v).powi(2)).sum()
    });
    if !sq.value.is_finite() {
        return Err(Error::Range("L2 distance".into()));
    }
    let value = sq.value.max(0.0).sqrt();
    let std_err = if value > 0.0 { sq.std_err / (2.0 * value) } else { sq.std_err.sqrt() };
    Ok(Estimate {
        value,
        std_err,
        warnings: sq.warnings,
    })
}

/// `K(mu_b0, mu_b) = E_{mu_b0}[log pi_b0 - log pi_b]`, clamped at zero.
pub fn kl_invariant(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
) -> Result<Estimate> {
    same_dim(b, b0)?;
    let mut est = law_b0.expect(|x| law_b0.log_density(x) - law_b.log_density(x));
    if !est.value.is_finite() {
        return Err(Error::Range("invariant divergence".into()));
    }
    if est.value < 0.0 {
        est.warnings.push(Warning::Clamped {
            magnitude: -est.value,
        });
        est.value = 0.0;
    }
    Ok(est)
}

/// `K(mu_b0, mu_b) + Delta / 2 ||b - b0||^2_{2, mu_b0}`.
pub fn kl_path(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
    delta: f64,
) -> Result<Estimate> {
    check_delta(delta)?;
    let inv = kl_invariant(b, b0, law_b, law_b0)?;
    let l2 = l2_mu_distance(b, b0, law_b0)?;
    let mut warnings = inv.warnings;
    warnings.extend(l2.warnings);
    Ok(Estimate {
        value: inv.value + 0.5 * delta * l2.value * l2.value,
        std_err: inv.std_err + delta * l2.value * l2.std_err,
        warnings,
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive and finite"));
    }
    Ok(())
}

/// `E_{mu_b0} K(p_b0(Delta, x, .), p_b(Delta, x, .))` by nested Monte Carlo.
///
/// Outer points come from `mu_b0`, inner points from `p_b0(Delta, x, .)` under
/// the model. Both drifts share the Monte Carlo seed of each outer point. The
/// standard error is taken across outer points.
#[allow(clippy::too_many_arguments)]
pub fn kl_transition(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b0: &StationaryLaw,
    delta: f64,
    model: &TransitionModel,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<Estimate> {
    same_dim(b, b0)?;
    if n_outer < 2 || n_inner == 0 {
        return Err(Error::invalid("kl_transition", "needs n_outer >= 2 and n_inner >= 1"));
    }
    let k = TransitionKernel::new(b, model, delta)?;
    let k0 = TransitionKernel::new(b0, model, delta)?;
    let outer = sample_stationary(law_b0, n_outer, rng::derive_seed(seed, 0))?;
    let means: Vec<f64> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let x = outer.points.get(i);
            let s = rng::derive_seed(seed, i as u64 + 1);
            let ys = k0.sample(x, n_inner, rng::derive_seed(s, 1))?;
            let l0 = k0.log_densities(x, &ys, s)?;
            let l = k.log_densities(x, &ys, s)?;
            Ok(l0.iter().zip(&l).map(|(p, q)| p.value - q.value).sum::<f64>() / n_inner as f64)
        })
        .collect::<Result<_>>()?;
    let mut est = Estimate::from_samples(&means);
    est.warnings.extend(outer.warnings);
    if est.value < -3.0 * est.std_err {
        est.warnings.push(Warning::EstimatorBias {
            estimate: est.value,
            std_err: est.std_err,
        });
    }
    Ok(est)
}

/// Transition divergence of two Ornstein-Uhlenbeck drifts, with the Gaussian
/// divergence in closed form and the outer expectation by quadrature.
pub fn kl_transition_exact_ou(b: &DriftSpec, b0: &DriftSpec, law_b0: &StationaryLaw, delta: f64) -> Result<Estimate> {
    check_delta(delta)?;
    let not_ou = || Error::Incompatible {
        method: "exact_ou".into(),
        reason: "a drift that is not Ornstein-Uhlenbeck".into(),
    };
    let beta = b.ou_rate().ok_or_else(not_ou)?;
    let beta0 = b0.ou_rate().ok_or_else(not_ou)?;
    let moments = |beta: f64| ((-beta * delta).exp(), -(-2.0 * beta * delta).exp_m1() / (2.0 * beta));
    let (e, v) = moments(beta);
    let (e0, v0) = moments(beta0);
    Ok(law_b0.expect(|x| {
        x.iter()
            .map(|xi| {
                let dm = xi * (e0 - e);
                0.5 * (v0 / v - 1.0 + dm * dm / v + (v / v0).ln())
            })
            .sum()
    }))
}

/// Path divergence from the Girsanov log-likelihood ratio of Euler paths.
///
/// Each path starts from `mu_b0` and follows `b0` with `substeps` Euler steps.
/// The ratio adds `log pi_b0(X_0) - log pi_b(X_0)` to the left-point
/// discretization of `int (b0 - b) . dX - 1/2 int (|b0|^2 - |b|^2) dt`.
#[allow(clippy::too_many_arguments)]
pub fn kl_path_girsanov(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
    delta: f64,
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<Estimate> {
    same_dim(b, b0)?;
    let dim = b.dim();
    let starts = sample_stationary(law_b0, n_paths, rng::derive_seed(seed, 0))?;
    let bundle = simulate_brownian_bundle(dim, delta, substeps, n_paths, rng::derive_seed(seed, 1))?;
    let dt = delta / substeps as f64;
    let terms: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let x0 = starts.points.get(p);
            let mut x = x0.to_vec();
            let mut u = vec![0.0; dim];
            let mut u0 = vec![0.0; dim];
            let mut l = law_b0.log_density(x0) - law_b.log_density(x0);
            for dw in bundle.path(p).chunks_exact(dim) {
                b.eval_into(&x, &mut u);
                b0.eval_into(&x, &mut u0);
                for i in 0..dim {
                    let dx = u0[i] * dt + dw[i];
                    l += (u0[i] - u[i]) * dx - 0.5 * (u0[i] * u0[i] - u[i] * u[i]) * dt;
                    x[i] += dx;
                }
            }
            l
        })
        .collect();
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::Range("Girsanov path divergence".into()));
    }
    let mut est = Estimate::from_samples(&terms);
    est.warnings.extend(starts.warnings);
    Ok(est)
}

/// Settings for the transition term of a [`DivergenceReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionKlConfig {
    pub model: TransitionModel,
    #[serde(default = "default_outer")]
    pub n_outer: usize,
    #[serde(default = "default_inner")]
    pub n_inner: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_outer() -> usize {
    2000
}

fn default_inner() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub delta: f64,
    pub l2_mu: Estimate,
    pub kl_invariant: Estimate,
    pub kl_path: Estimate,
    /// `Delta / 2 ||b - b0||^2_{2, mu_b0}`.
    pub transition_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_transition: Option<Estimate>,
    /// Whether the transition divergence is within three standard errors of the bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_bound: Option<bool>,
}

/// All divergences of `b` from `b0`. The transition term uses closed-form
/// Gaussians for two Ornstein-Uhlenbeck drifts under `exact_ou`, and nested
/// Monte Carlo otherwise.
pub fn divergence_report(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
    delta: f64,
    transition: Option<&TransitionKlConfig>,
) -> Result<DivergenceReport> {
    let l2_mu = l2_mu_distance(b, b0, law_b0)?;
    let kl_invariant = kl_invariant(b, b0, law_b, law_b0)?;
    let kl_path = kl_path(b, b0, law_b, law_b0, delta)?;
    let transition_bound = 0.5 * delta * l2_mu.value * l2_mu.value;
    let kl_transition = match transition {
        None => None,
        Some(cfg) if cfg.model.method == Method::ExactOu => Some(kl_transition_exact_ou(b, b0, law_b0, delta)?),
        Some(cfg) => Some(kl_transition(
            b, b0, law_b0, delta, &cfg.model, cfg.n_outer, cfg.n_inner, cfg.seed,
        )?),
    };
    let within_bound = kl_transition
        .as_ref()
        .map(|k| k.value <= transition_bound * (1.0 + 1e-12) + 3.0 * k.std_err);
    Ok(DivergenceReport {
        delta,
        l2_mu,
        kl_invariant,
        kl_path,
        transition_bound,
        kl_transition,
        within_bound,
    })
}
