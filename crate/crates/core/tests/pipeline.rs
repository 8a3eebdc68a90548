use driftpost::{
    build_net, compute_posterior, likelihood_ratio_moments, simulate_series, DriftSpec, FunctionFamily,
    NetSettings, QuadratureConfig, Reference, SimScheme, StationaryLaw, TransitionModel,
};

fn ou(beta: f64) -> (DriftSpec, StationaryLaw) {
    let spec = DriftSpec::ou(beta, 2.0).unwrap();
    let law = StationaryLaw::new(&spec, &QuadratureConfig::default()).unwrap();
    (spec, law)
}

#[test]
fn likelihood_ratio_has_mean_one_after_one_step() {
    let (b, law_b) = ou(1.2);
    let (b0, law_b0) = ou(1.0);
    let rows = likelihood_ratio_moments(&b, &b0, &law_b, &law_b0, 0.5, &TransitionModel::exact_ou(), &[1], 100_000, 17)
        .unwrap();
    let m = &rows[0].mean_ratio;
    assert!((m.value - 1.0).abs() <= 3.0 * m.std_err, "{} +- {}", m.value, m.std_err);
    assert!(m.std_err < 0.01);
}

#[test]
fn likelihood_ratio_of_the_truth_is_identically_one() {
    let (b0, law_b0) = ou(1.0);
    let rows = likelihood_ratio_moments(&b0, &b0, &law_b0, &law_b0, 0.5, &TransitionModel::exact_ou(), &[1, 5], 50, 3)
        .unwrap();
    for r in rows {
        assert!((r.mean_ratio.value - 1.0).abs() < 1e-12);
        assert!(r.mean_ratio.std_err < 1e-12);
    }
}

#[test]
fn covering_net_posterior_moves_toward_the_truth() {
    let (b0, law0) = ou(1.0);
    let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
    let net = build_net(&family, &NetSettings::dyadic(3, 4, vec![0.5, 0.25, 0.125, 0.0625], 3)).unwrap();
    let laws = net.laws(&QuadratureConfig::default()).unwrap();
    let series = simulate_series(&b0, &law0, 0.5, 2000, SimScheme::exact_ou(), 99).unwrap();
    let model = TransitionModel::exact_ou();
    let post = compute_posterior(&net, &laws, &series, &model, Reference::Drift { spec: &b0, law: &law0 }).unwrap();
    let mean_beta: f64 = net
        .specs()
        .zip(&post.weights)
        .map(|(s, w)| s.ou_rate().unwrap() * w)
        .sum();
    assert!((mean_beta - 1.0).abs() < 0.1, "posterior mean rate {mean_beta}");
    let prior_mean: f64 = net.specs().zip(&net.weights).map(|(s, w)| s.ou_rate().unwrap() * w).sum();
    let spread = |ws: &[f64]| -> f64 {
        net.specs().zip(ws).map(|(s, w)| (s.ou_rate().unwrap() - 1.0).powi(2) * w).sum()
    };
    assert!(spread(&post.weights) < spread(&net.weights) / 10.0, "prior mean {prior_mean}");
}
