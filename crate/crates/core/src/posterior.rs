//! Posteriors over the atoms of a [`PriorNet`].
//!
//! The likelihood ratio of `b` against a reference `b0` for `X_0, X_Delta, ..., X_{n Delta}` is
//!
//! ```text
//! L_n(b) = pi_b(X_0) / pi_b0(X_0) * prod_i p_b(Delta, X_{i-1}, X_i) / p_b0(Delta, X_{i-1}, X_i)
//! ```
//!
//! and the posterior weight of atom `j` is proportional to `w_j L_n(b_j)`.
//! Under Monte Carlo density methods transition `i` uses the seed
//! `derive_seed(model.seed, i)` for every drift.

use crate::drift::{DriftSpec, StationaryLaw};
use crate::error::{Error, Estimate, Result, Warning};
use crate::prior_net::PriorNet;
use crate::quadrature::{log_sum_exp, pairwise_sum};
use crate::rng;
use crate::simulate::{simulate_series, ObservationSeries, SimScheme};
use crate::transition::{weak_distance, Method, TopologyProbe, TransitionKernel, TransitionModel};
use crate::divergence::l2_mu_distance;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `log pi_b(X_0)` followed by `log p_b(Delta, X_{i-1}, X_i)` for each transition.
pub fn log_likelihood_terms(
    spec: &DriftSpec,
    law: &StationaryLaw,
    series: &ObservationSeries,
    model: &TransitionModel,
) -> Result<Vec<f64>> {
    if series.dim() != spec.dim() || law.dim() != spec.dim() {
        return Err(Error::invalid("series", "dimension differs from the drift"));
    }
    let kernel = TransitionKernel::new(spec, model, series.delta())?;
    let pts = series.points();
    let first = law.log_density(pts.get(0));
    if !first.is_finite() {
        return Err(Error::NonFiniteLikelihood { index: 0 });
    }
    let mut terms = vec![first];
    let transitions: Vec<f64> = (1..pts.len())
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(model.seed, i as u64);
            let v = kernel.log_density_seeded(pts.get(i - 1), pts.get(i), seed)?.value;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteLikelihood { index: i })
            }
        })
        .collect::<Result<_>>()?;
    terms.extend(transitions);
    Ok(terms)
}

/// `log L_n(b)` against `b0`; zero when the series has no transitions.
pub fn log_likelihood_ratio(
    b: &DriftSpec,
    b0: &DriftSpec,
    series: &ObservationSeries,
    model: &TransitionModel,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
) -> Result<f64> {
    if series.transitions() == 0 {
        return Ok(0.0);
    }
    let t = log_likelihood_terms(b, law_b, series, model)?;
    let t0 = log_likelihood_terms(b0, law_b0, series, model)?;
    Ok(pairwise_sum(&t) - pairwise_sum(&t0))
}

/// The drift against which likelihood ratios are taken.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Drift {
        spec: &'a DriftSpec,
        law: &'a StationaryLaw,
    },
    /// The first atom with a finite likelihood.
    SelfNormalizing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub net_ref: String,
    pub prior: Vec<f64>,
    /// `log L_n(b_j)`, `None` for atoms with a non-finite likelihood.
    pub log_likelihood_ratios: Vec<Option<f64>>,
    /// `log w_j + log L_n(b_j)`.
    pub log_weights_unnormalized: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    pub n_used: usize,
    pub model: TransitionModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl PosteriorResult {
    /// Index and weight of the heaviest atom.
    pub fn top(&self) -> (usize, f64) {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("posterior over a non-empty net")
    }

    /// Columns `atom,prior,log_likelihood_ratio,posterior`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["atom", "prior", "log_likelihood_ratio", "posterior"])?;
        for (j, ((p, l), q)) in self
            .prior
            .iter()
            .zip(&self.log_likelihood_ratios)
            .zip(&self.weights)
            .enumerate()
        {
            let llr = l.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([j.to_string(), p.to_string(), llr, q.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

type Normalized = (Vec<Option<f64>>, Vec<f64>, Vec<Warning>);

/// Normalizes `log w_j + llr_j` by max-shifted exponentiation; `None` atoms get weight zero.
fn normalize(prior: &[f64], llr: &[Option<f64>]) -> Result<Normalized> {
    let mut warnings = Vec::new();
    let log_w: Vec<Option<f64>> = prior
        .iter()
        .zip(llr)
        .enumerate()
        .map(|(j, (p, l))| match l.map(|l| p.ln() + l) {
            Some(v) if v.is_finite() => Some(v),
            _ => {
                warnings.push(Warning::NonFiniteAtom { index: j });
                None
            }
        })
        .collect();
    let finite: Vec<f64> = log_w.iter().flatten().copied().collect();
    if finite.is_empty() {
        return Err(Error::DegeneratePosterior);
    }
    let lse = log_sum_exp(&finite);
    let weights = log_w
        .iter()
        .map(|l| l.map_or(0.0, |v| (v - lse).exp()))
        .collect();
    Ok((log_w, weights, warnings))
}

/// Per-atom log-likelihood terms; atoms whose likelihood is non-finite give `None`.
fn atom_terms(
    net: &PriorNet,
    laws: &[StationaryLaw],
    series: &ObservationSeries,
    model: &TransitionModel,
) -> Result<Vec<Option<Vec<f64>>>> {
    if laws.len() != net.len() {
        return Err(Error::invalid("laws", "need one stationary law per atom"));
    }
    net.atoms
        .par_iter()
        .zip(laws)
        .map(|(a, law)| match log_likelihood_terms(&a.spec, law, series, model) {
            Ok(t) => Ok(Some(t)),
            Err(Error::NonFiniteLikelihood { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn reference_terms(
    reference: Reference<'_>,
    atoms: &[Option<Vec<f64>>],
    series: &ObservationSeries,
    model: &TransitionModel,
) -> Result<Vec<f64>> {
    match reference {
        Reference::Drift { spec, law } => log_likelihood_terms(spec, law, series, model),
        Reference::SelfNormalizing => atoms
            .iter()
            .flatten()
            .next()
            .cloned()
            .ok_or(Error::DegeneratePosterior),
    }
}

fn posterior_from_terms(
    net: &PriorNet,
    atoms: &[Option<Vec<f64>>],
    reference: &[f64],
    n: usize,
    model: &TransitionModel,
) -> Result<PosteriorResult> {
    let llr: Vec<Option<f64>> = if n == 0 {
        vec![Some(0.0); net.len()]
    } else {
        let r = pairwise_sum(&reference[..=n]);
        atoms
            .iter()
            .map(|t| t.as_ref().map(|t| pairwise_sum(&t[..=n]) - r))
            .collect()
    };
    let (log_w, weights, mut warnings) = normalize(&net.weights, &llr)?;
    warnings.extend(net.warnings.iter().cloned());
    Ok(PosteriorResult {
        net_ref: net.id.clone(),
        prior: net.weights.clone(),
        log_likelihood_ratios: llr,
        log_weights_unnormalized: log_w,
        weights,
        n_used: n,
        model: *model,
        warnings,
    })
}

/// Posterior weights `w_j L_n(b_j) / sum_k w_k L_n(b_k)`; the prior itself when `n = 0`.
pub fn compute_posterior(
    net: &PriorNet,
    laws: &[StationaryLaw],
    series: &ObservationSeries,
    model: &TransitionModel,
    reference: Reference<'_>,
) -> Result<PosteriorResult> {
    let n = series.transitions();
    if n == 0 {
        return posterior_from_terms(net, &[], &[], 0, model);
    }
    let atoms = atom_terms(net, laws, series, model)?;
    let r = reference_terms(reference, &atoms, series, model)?;
    posterior_from_terms(net, &atoms, &r, n, model)
}

/// Neighbourhoods `U` of `b0`.
#[derive(Debug, Clone, Copy)]
pub enum Criterion<'a> {
    /// `U = {b : ||P b f - P b0 f||_{1, nu} < epsilon}`.
    Weak {
        probe: &'a TopologyProbe,
        model: TransitionModel,
        delta: f64,
    },
    /// `U = {b : ||b - b0||_{2, mu_b0} < radius}`.
    L2Ball {
        law0: &'a StationaryLaw,
        radius: f64,
    },
}

/// Whether each atom lies outside the neighbourhood.
pub fn outside_neighbourhood(net: &PriorNet, b0: &DriftSpec, criterion: Criterion<'_>) -> Result<Vec<bool>> {
    net.atoms
        .par_iter()
        .map(|a| match criterion {
            Criterion::Weak {
                probe,
                model,
                delta,
            } => Ok(weak_distance(&a.spec, b0, &model, delta, probe)?.value >= probe.epsilon),
            Criterion::L2Ball { law0, radius } => Ok(l2_mu_distance(&a.spec, b0, law0)?.value >= radius),
        })
        .collect()
}

/// Posterior mass outside the neighbourhood of `b0`.
pub fn neighbourhood_complement_mass(
    post: &PosteriorResult,
    net: &PriorNet,
    b0: &DriftSpec,
    criterion: Criterion<'_>,
) -> Result<f64> {
    let outside = outside_neighbourhood(net, b0, criterion)?;
    Ok(complement_mass(post, &outside))
}

fn complement_mass(post: &PosteriorResult, outside: &[bool]) -> f64 {
    let masses: Vec<f64> = post
        .weights
        .iter()
        .zip(outside)
        .filter(|(_, o)| **o)
        .map(|(w, _)| *w)
        .collect();
    pairwise_sum(&masses)
}

/// Simulation scheme for data from `b0`: exact for Ornstein-Uhlenbeck drifts, 64 Euler substeps otherwise.
pub fn truth_scheme(b0: &DriftSpec) -> SimScheme {
    if b0.ou_rate().is_some() {
        SimScheme::exact_ou()
    } else {
        SimScheme::euler(64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub mass: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub model: TransitionModel,
}

/// Complement masses indexed `[replication][n]`.
///
/// Replication `r` simulates one series of the largest `n` from
/// `derive_seed(seed, r)` and evaluates every `n` on its prefix.
#[allow(clippy::too_many_arguments)]
pub fn consistency_masses(
    net: &PriorNet,
    laws: &[StationaryLaw],
    b0: &DriftSpec,
    law0: &StationaryLaw,
    delta: f64,
    criterion: Criterion<'_>,
    config: &ConsistencyConfig,
) -> Result<Vec<Vec<f64>>> {
    if config.replications == 0 || config.ns.is_empty() {
        return Err(Error::invalid("consistency", "needs at least one replication and one n"));
    }
    let outside = outside_neighbourhood(net, b0, criterion)?;
    let n_max = *config.ns.iter().max().expect("non-empty");
    let scheme = truth_scheme(b0);
    (0..config.replications)
        .map(|r| {
            let series = simulate_series(b0, law0, delta, n_max, scheme, rng::derive_seed(config.seed, r as u64))?;
            let atoms = if n_max == 0 {
                Vec::new()
            } else {
                atom_terms(net, laws, &series, &config.model)?
            };
            let reference = if n_max == 0 {
                Vec::new()
            } else {
                log_likelihood_terms(b0, law0, &series, &config.model)?
            };
            config
                .ns
                .iter()
                .map(|&n| {
                    let post = posterior_from_terms(net, &atoms, &reference, n, &config.model)?;
                    Ok(complement_mass(&post, &outside))
                })
                .collect()
        })
        .collect()
}

/// Mean complement mass and its standard error across replications, per `n`.
#[allow(clippy::too_many_arguments)]
pub fn consistency_curve(
    net: &PriorNet,
    laws: &[StationaryLaw],
    b0: &DriftSpec,
    law0: &StationaryLaw,
    delta: f64,
    criterion: Criterion<'_>,
    config: &ConsistencyConfig,
) -> Result<Vec<CurveRow>> {
    let masses = consistency_masses(net, laws, b0, law0, delta, criterion, config)?;
    Ok(config
        .ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let col: Vec<f64> = masses.iter().map(|row| row[k]).collect();
            let est = Estimate::from_samples(&col);
            CurveRow {
                n,
                mass: est.value,
                std_err: if col.len() > 1 { est.std_err } else { 0.0 },
            }
        })
        .collect())
}

/// Writes `n,mass,stderr`.
pub fn write_curve_csv<W: Write>(rows: &[CurveRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "mass", "stderr"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.mass.to_string(), r.std_err.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Data scheme under which the model's densities are exact transition laws.
pub fn model_scheme(model: &TransitionModel) -> SimScheme {
    match model.method {
        Method::ExactOu => SimScheme::exact_ou(),
        Method::EulerGaussian => SimScheme::euler(1),
        Method::McKde { substeps, .. } | Method::GirsanovMc { substeps, .. } => SimScheme::euler(substeps),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMomentRow {
    pub n: usize,
    /// `E L_n(b)`.
    pub mean_ratio: Estimate,
    /// `E sqrt(L_n(b))`.
    pub mean_sqrt_ratio: Estimate,
    /// Paired mean of `sqrt(L_n) - sqrt(L_prev)` for the previous `n` in the list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sqrt_step: Option<Estimate>,
}

impl RatioMomentRow {
    /// `|E L_n - 1|` within `k` standard errors.
    pub fn mean_one_within(&self, k: f64) -> bool {
        (self.mean_ratio.value - 1.0).abs() <= k * self.mean_ratio.std_err
    }

    /// `E sqrt(L_n)` has not increased by more than `k` standard errors.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.sqrt_step.as_ref().is_none_or(|s| s.value <= k * s.std_err)
    }
}

/// Moments of `L_n(b)` under `P_b0` from independent series drawn with [`model_scheme`].
#[allow(clippy::too_many_arguments)]
pub fn likelihood_ratio_moments(
    b: &DriftSpec,
    b0: &DriftSpec,
    law_b: &StationaryLaw,
    law_b0: &StationaryLaw,
    delta: f64,
    model: &TransitionModel,
    ns: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<RatioMomentRow>> {
    if replications < 2 || ns.is_empty() || ns.contains(&0) {
        return Err(Error::invalid("moments", "needs two replications and positive n"));
    }
    let n_max = *ns.iter().max().expect("non-empty");
    let scheme = model_scheme(model);
    let ratios: Vec<Vec<f64>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let series = simulate_series(b0, law_b0, delta, n_max, scheme, rng::derive_seed(seed, r as u64))?;
            let t = log_likelihood_terms(b, law_b, &series, model)?;
            let t0 = log_likelihood_terms(b0, law_b0, &series, model)?;
            Ok(ns
                .iter()
                .map(|&n| (pairwise_sum(&t[..=n]) - pairwise_sum(&t0[..=n])).exp())
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let col: Vec<f64> = ratios.iter().map(|r| r[k]).collect();
            let roots: Vec<f64> = col.iter().map(|v| v.sqrt()).collect();
            let sqrt_step = (k > 0).then(|| {
                let steps: Vec<f64> = ratios.iter().map(|r| r[k].sqrt() - r[k - 1].sqrt()).collect();
                Estimate::from_samples(&steps)
            });
            RatioMomentRow {
                n,
                mean_ratio: Estimate::from_samples(&col),
                mean_sqrt_ratio: Estimate::from_samples(&roots),
                sqrt_step,
            }
        })
        .collect())
}
