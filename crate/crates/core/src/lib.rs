//! Bayesian drift estimation for ergodic diffusions `dX_t = b(X_t) dt + dW_t`
//! observed at discrete times `0, Delta, ..., n Delta`.
//!
//! The crate builds discrete priors on finite sup-norm coverings of drift
//! families, computes exact posteriors over them from likelihood ratios, and
//! measures how the posterior concentrates around the true drift.
//!
//! ```
//! use driftpost::{compute_posterior, simulate_series, DriftSpec, PriorNet, QuadratureConfig,
//!     Reference, SimScheme, StationaryLaw, TransitionModel};
//!
//! let truth = DriftSpec::ou(1.0, 2.0)?;
//! let law = StationaryLaw::new(&truth, &QuadratureConfig::default())?;
//! let series = simulate_series(&truth, &law, 0.5, 500, SimScheme::exact_ou(), 7)?;
//!
//! let net = PriorNet::explicit(vec![DriftSpec::ou(1.0, 2.0)?, DriftSpec::ou(2.0, 2.0)?], vec![0.5, 0.5])?;
//! let laws = net.laws(&QuadratureConfig::default())?;
//! let post = compute_posterior(&net, &laws, &series, &TransitionModel::exact_ou(), Reference::SelfNormalizing)?;
//! assert!(post.weights[0] > 0.99);
//! # Ok::<(), driftpost::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod drift;
pub mod error;
pub mod points;
pub mod posterior;
pub mod prior_net;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod transition;

pub use divergence::{
    divergence_report, kl_invariant, kl_path, kl_path_girsanov, kl_transition, kl_transition_exact_ou,
    l2_mu_distance, DivergenceReport, TransitionKlConfig,
};
pub use drift::{
    sample_stationary, scale_function, stationary_density_1d, stationary_density_potential, validate_drift,
    Constraint, Dissipativity, DriftForm, DriftSpec, ParametricId, PotentialSpec, Profile, ProfileTail,
    QuadratureConfig, QuadratureMethod, StationaryLaw, StationarySample, Tabulated, ValidationReport, Violation,
};
pub use error::{Error, Estimate, Result, Warning};
pub use points::Points;
pub use posterior::{
    compute_posterior, consistency_curve, consistency_masses, likelihood_ratio_moments, log_likelihood_ratio,
    neighbourhood_complement_mass, ConsistencyConfig, Criterion, CurveRow, PosteriorResult, RatioMomentRow,
    Reference,
};
pub use prior_net::{
    audit_covering, build_net, prior_ball_mass, sup_metric, tail_truncation_bound, BallMass, CoveringAudit,
    FamilyKind, FunctionFamily, NetSettings, PriorNet,
};
pub use simulate::{
    ingest_csv, simulate_brownian_bundle, simulate_series, BrownianBundle, ObservationSeries, Origin, SchemeKind,
    SimScheme,
};
pub use transition::{
    equicontinuity_probe, identifiability_probe, partition_gaps, small_delta_check, transition_density,
    transition_operator, weak_distance, GridMeasure, IdentifiabilityReport, Method, SmallDeltaReport,
    TestFunction, TopologyProbe, TransitionKernel, TransitionModel,
};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/drifts.md")]
    mod drifts {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/transitions.md")]
    mod transitions {}
    #[doc = include_str!("../../../book/src/prior-nets.md")]
    mod prior_nets {}
    #[doc = include_str!("../../../book/src/posterior.md")]
    mod posterior {}
    #[doc = include_str!("../../../book/src/divergences.md")]
    mod divergences {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
