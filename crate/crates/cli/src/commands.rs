use crate::config::{CriterionConfig, Loaded, NetConfig};
use crate::output::OutputDir;
use crate::{CliError, Command};
use driftpost::posterior::write_curve_csv;
use driftpost::{
    audit_covering, compute_posterior, consistency_curve, divergence_report, identifiability_probe, ingest_csv,
    simulate_series, validate_drift, ConsistencyConfig, Criterion, DivergenceReport, DriftSpec, GridMeasure,
    ObservationSeries, Reference, StationaryLaw, TopologyProbe,
};
use serde::Serialize;

pub fn execute(command: Command, loaded: &Loaded, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    if !matches!(command, Command::Validate) {
        check_referenced(loaded)?;
    }
    match command {
        Command::Validate => validate(loaded, out),
        Command::Simulate => simulate(loaded, seed, out),
        Command::Ingest => ingest(loaded, out),
        Command::Net => net(loaded, seed, out),
        Command::Posterior => posterior(loaded, seed, out),
        Command::Consistency => consistency(loaded, seed, out),
        Command::Divergence => divergence(loaded, out),
        Command::Identifiability => identifiability(loaded, out),
    }
}

#[derive(Serialize)]
struct DriftAudit {
    index: usize,
    compliant: bool,
    violations: Vec<String>,
}

fn validate(loaded: &Loaded, out: &mut OutputDir) -> Result<(), CliError> {
    let c = &loaded.config;
    let specs: Vec<&DriftSpec> = c.truth.iter().chain(&c.drifts).collect();
    if specs.is_empty() {
        return Err(CliError::Config("nothing to validate: set `truth` or `drifts`".into()));
    }
    let mut audits = Vec::new();
    let mut failures = Vec::new();
    for (index, spec) in specs.into_iter().enumerate() {
        let report = validate_drift(spec, c.validation.half_width, c.validation.points)?;
        let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
        if let Some(first) = violations.first() {
            failures.push(format!("drift {index}: {first} ({} violations)", violations.len()));
        }
        audits.push(DriftAudit {
            index,
            compliant: report.is_compliant(),
            violations,
        });
    }
    out.json("validation.json", &audits)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failures.join("; ")))
    }
}

/// Every drift named in the config must pass its class audit before any pipeline runs.
fn check_referenced(loaded: &Loaded) -> Result<(), CliError> {
    let c = &loaded.config;
    let mut specs: Vec<(&str, &DriftSpec)> = c.truth.iter().map(|s| ("truth", s)).collect();
    specs.extend(c.drifts.iter().map(|s| ("drifts", s)));
    if let Some(NetConfig::Explicit { atoms, .. }) = &c.net {
        specs.extend(atoms.iter().map(|s| ("net.atoms", s)));
    }
    if let Some(d) = &c.divergence {
        specs.extend(d.pairs.iter().flat_map(|p| [("divergence.pairs", &p.b), ("divergence.pairs", &p.b0)]));
    }
    if let Some(i) = &c.identifiability {
        specs.extend([("identifiability", &i.a), ("identifiability", &i.b)]);
    }
    for (field, spec) in specs {
        let report = validate_drift(spec, c.validation.half_width, c.validation.points)?;
        if let Some(v) = report.violations.first() {
            return Err(CliError::Validation(format!("{field}: {v}")));
        }
    }
    Ok(())
}

fn law(loaded: &Loaded, spec: &DriftSpec) -> Result<StationaryLaw, CliError> {
    Ok(StationaryLaw::new(spec, &loaded.config.quadrature)?)
}

fn simulated(loaded: &Loaded, seed: u64) -> Result<ObservationSeries, CliError> {
    let truth = loaded.truth()?;
    let law0 = law(loaded, truth)?;
    Ok(simulate_series(truth, &law0, loaded.delta()?, loaded.n()?, loaded.scheme(truth), seed)?)
}

fn series_csv(series: &ObservationSeries) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    Ok(buf)
}

fn simulate(loaded: &Loaded, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let series = simulated(loaded, seed)?;
    out.write("series.csv", &series_csv(&series)?)
}

fn data(loaded: &Loaded) -> Result<Option<ObservationSeries>, CliError> {
    match &loaded.config.data {
        None => Ok(None),
        Some(p) => Ok(Some(ingest_csv(&loaded.resolve(p), loaded.delta()?)?)),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    observations: usize,
    dim: usize,
    delta: f64,
}

fn ingest(loaded: &Loaded, out: &mut OutputDir) -> Result<(), CliError> {
    let series = data(loaded)?.ok_or_else(|| CliError::Config("config field `data` is required by ingest".into()))?;
    out.write("series.csv", &series_csv(&series)?)?;
    out.json(
        "ingest.json",
        &IngestSummary {
            observations: series.points().len(),
            dim: series.dim(),
            delta: series.delta(),
        },
    )
}

fn net(loaded: &Loaded, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let net = loaded.net(seed)?;
    out.json("net.json", &net)?;
    if net.family.is_some() {
        out.json("audit.json", &audit_covering(&net, driftpost::rng::derive_seed(seed, 1))?)?;
    }
    Ok(())
}

fn posterior(loaded: &Loaded, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let net = loaded.net(seed)?;
    let laws = net.laws(&loaded.config.quadrature)?;
    let series = match data(loaded)? {
        Some(s) => s,
        None => simulated(loaded, seed)?,
    };
    let model = loaded.model();
    let truth_law = match &loaded.config.truth {
        Some(t) => Some((t, law(loaded, t)?)),
        None => None,
    };
    let reference = match &truth_law {
        Some((spec, law)) => Reference::Drift { spec, law },
        None => Reference::SelfNormalizing,
    };
    let post = compute_posterior(&net, &laws, &series, &model, reference)?;
    let mut csv = Vec::new();
    post.write_csv(&mut csv)?;
    out.write("posterior.csv", &csv)?;
    out.json("posterior.json", &post)
}

fn consistency(loaded: &Loaded, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let c = &loaded.config;
    let truth = loaded.truth()?;
    let law0 = law(loaded, truth)?;
    let delta = loaded.delta()?;
    let model = loaded.model();
    let net = loaded.net(seed)?;
    let laws = net.laws(&c.quadrature)?;
    if c.n_schedule.is_empty() {
        return Err(CliError::Config("config field `n_schedule` is required by consistency".into()));
    }
    let config = ConsistencyConfig {
        ns: c.n_schedule.clone(),
        replications: c.replications,
        seed,
        model,
    };
    let probe;
    let criterion = match c
        .criterion
        .as_ref()
        .ok_or_else(|| CliError::Config("config field `criterion` is required by consistency".into()))?
    {
        CriterionConfig::L2Ball { radius } => Criterion::L2Ball {
            law0: &law0,
            radius: *radius,
        },
        CriterionConfig::Weak { f, nu, epsilon } => {
            let nu: GridMeasure = loaded.nu(nu, truth.dim())?;
            probe = TopologyProbe::new(*f, nu, *epsilon)?;
            Criterion::Weak {
                probe: &probe,
                model,
                delta,
            }
        }
    };
    let rows = consistency_curve(&net, &laws, truth, &law0, delta, criterion, &config)?;
    let mut csv = Vec::new();
    write_curve_csv(&rows, &mut csv)?;
    out.write("curve.csv", &csv)
}

#[derive(Serialize)]
struct PairReport {
    pair: usize,
    report: DivergenceReport,
}

fn divergence(loaded: &Loaded, out: &mut OutputDir) -> Result<(), CliError> {
    let cfg = loaded
        .config
        .divergence
        .as_ref()
        .ok_or_else(|| CliError::Config("config field `divergence` is required by divergence".into()))?;
    let delta = loaded.delta()?;
    let mut reports = Vec::new();
    for (pair, p) in cfg.pairs.iter().enumerate() {
        let (lb, l0) = (law(loaded, &p.b)?, law(loaded, &p.b0)?);
        let report = divergence_report(&p.b, &p.b0, &lb, &l0, delta, cfg.transition.as_ref())?;
        reports.push(PairReport { pair, report });
    }
    out.json("divergence.json", &reports)
}

fn identifiability(loaded: &Loaded, out: &mut OutputDir) -> Result<(), CliError> {
    let cfg = loaded
        .config
        .identifiability
        .as_ref()
        .ok_or_else(|| CliError::Config("config field `identifiability` is required by identifiability".into()))?;
    let grid = GridMeasure::uniform(cfg.a.dim(), cfg.grid_half_width, cfg.grid_points, 1.0)?;
    let report = identifiability_probe(
        &cfg.a,
        &cfg.b,
        &loaded.model(),
        loaded.delta()?,
        &cfg.functions,
        grid.nodes(),
    )?;
    out.json("identifiability.json", &report)
}
