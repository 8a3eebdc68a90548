//! The weak topology: drifts are close when `P_Delta f` is close in `L^1(nu)`.

use super::{paired_difference, Method, TestFunction, TransitionKernel, TransitionModel};
use crate::drift::DriftSpec;
use crate::error::{Error, Estimate, Result, Warning};
use crate::points::Points;
use crate::quadrature::{ols_slope, uniform_grid};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// A finite measure `nu = sum_i w_i delta_{x_i}` with strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    nodes: Points,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(nodes: Points, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::invalid("nu", "needs one weight per node and at least one node"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("nu", "weights must be positive and finite"));
        }
        if nodes.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("nu", "nodes must be finite"));
        }
        Ok(GridMeasure { nodes, weights })
    }

    /// Tensor grid of `points_per_axis^d` nodes on `[-L, L]^d` sharing `total_mass` equally.
    pub fn uniform(dim: usize, half_width: f64, points_per_axis: usize, total_mass: f64) -> Result<Self> {
        if dim == 0 || points_per_axis == 0 {
            return Err(Error::invalid("nu", "dimension and points must be positive"));
        }
        let axis = uniform_grid(half_width, points_per_axis);
        let count = points_per_axis.pow(dim as u32);
        let mut nodes = Points::with_capacity(dim, count);
        let mut x = vec![0.0; dim];
        for flat in 0..count {
            let mut rest = flat;
            for xi in x.iter_mut() {
                *xi = axis[rest % points_per_axis];
                rest /= points_per_axis;
            }
            nodes.push(&x);
        }
        GridMeasure::new(nodes, vec![total_mass / count as f64; count])
    }

    pub fn nodes(&self) -> &Points {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Reads `x1[,x2,...],weight` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let ok = dim >= 1
            && (1..=dim).all(|i| header[i - 1] == *format!("x{i}"))
            && &header[dim] == "weight";
        if !ok {
            return Err(Error::Ingest {
                row: 0,
                reason: "header must be x1,...,xd,weight".into(),
            });
        }
        let mut nodes = Points::new(dim);
        let mut weights = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| Error::Ingest {
                row: i + 1,
                reason: "non-numeric cell".into(),
            })?;
            nodes.push(&vals[..dim]);
            weights.push(vals[dim]);
        }
        GridMeasure::new(nodes, weights)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.nodes.dim();
        let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (x, wt) in self.nodes.iter().zip(&self.weights) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(wt.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A subbasic weak neighbourhood `{b : ||P b f - P b0 f||_{1, nu} < epsilon}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyProbe {
    pub f: TestFunction,
    pub nu: GridMeasure,
    pub epsilon: f64,
}

impl TopologyProbe {
    pub fn new(f: TestFunction, nu: GridMeasure, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        if epsilon > 2.0 * nu.total_mass() * f.sup_bound() {
            return Err(Error::invalid("epsilon", "must not exceed 2 nu(R^d)"));
        }
        Ok(TopologyProbe { f, nu, epsilon })
    }
}

fn merge_warnings(into: &mut Vec<Warning>, from: &[Warning]) {
    for w in from {
        if !into.contains(w) {
            into.push(w.clone());
        }
    }
}

/// `sum_i w_i |P^a f(x_i) - P^b f(x_i)|` with common random numbers.
///
/// The standard error aggregates the paired per-node errors as
/// `sqrt(sum_i w_i^2 se_i^2)`.
pub fn weak_distance(
    spec_a: &DriftSpec,
    spec_b: &DriftSpec,
    model: &TransitionModel,
    delta: f64,
    probe: &TopologyProbe,
) -> Result<Estimate> {
    if spec_a.dim() != spec_b.dim() || spec_a.dim() != probe.nu.nodes().dim() {
        return Err(Error::invalid("probe", "dimensions of drifts and nu differ"));
    }
    let ka = TransitionKernel::new(spec_a, model, delta)?;
    let kb = TransitionKernel::new(spec_b, model, delta)?;
    weak_distance_with(&ka, &kb, probe)
}

/// [`weak_distance`] on prepared kernels.
pub fn weak_distance_with(
    ka: &TransitionKernel<'_>,
    kb: &TransitionKernel<'_>,
    probe: &TopologyProbe,
) -> Result<Estimate> {
    let mut total = 0.0;
    let mut var = 0.0;
    let mut warnings = Vec::new();
    for (x, w) in probe.nu.nodes().iter().zip(probe.nu.weights()) {
        let sa = ka.operator_samples(&probe.f, x)?;
        let sb = kb.operator_samples(&probe.f, x)?;
        let d = paired_difference(&sa, &sb);
        total += w * d.value.abs();
        var += (w * d.std_err).powi(2);
        merge_warnings(&mut warnings, &d.warnings);
    }
    Ok(Estimate {
        value: total,
        std_err: var.sqrt(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub max_gap: f64,
    pub argmax: Vec<f64>,
    pub function: TestFunction,
    /// `sqrt(se_a^2 + se_b^2)` of the two operator estimates at the argmax.
    pub std_err: f64,
    pub separated: bool,
}

/// Gaps below this are indistinguishable from rounding under exact methods.
const EXACT_GAP_FLOOR: f64 = 1e-12;

/// Largest operator gap over `family` and `grid`.
///
/// Both drifts share the model seed, so Monte Carlo gaps are paired
/// estimates. Separation is declared only when the gap exceeds five times
/// the unpaired noise floor of a single operator estimate, which is the
/// resolution at which the two operators can be told apart on their own.
pub fn identifiability_probe(
    spec_a: &DriftSpec,
    spec_b: &DriftSpec,
    model: &TransitionModel,
    delta: f64,
    family: &[TestFunction],
    grid: &Points,
) -> Result<IdentifiabilityReport> {
    if family.is_empty() || grid.is_empty() {
        return Err(Error::invalid("family", "needs at least one function and one grid point"));
    }
    let ka = TransitionKernel::new(spec_a, model, delta)?;
    let kb = TransitionKernel::new(spec_b, model, delta)?;
    let mut best: Option<IdentifiabilityReport> = None;
    for f in family {
        for x in grid.iter() {
            let ea = ka.operator(f, x)?;
            let eb = kb.operator(f, x)?;
            let gap = (ea.value - eb.value).abs();
            if best.as_ref().is_none_or(|b| gap > b.max_gap) {
                let std_err = ea.std_err.hypot(eb.std_err);
                best = Some(IdentifiabilityReport {
                    max_gap: gap,
                    argmax: x.to_vec(),
                    function: *f,
                    std_err,
                    separated: gap > 5.0 * std_err && gap > EXACT_GAP_FLOOR,
                });
            }
        }
    }
    Ok(best.expect("non-empty family and grid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallDeltaReport {
    /// `(Delta, R(Delta))` rows.
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `log R` against `log Delta`; absent when a residual vanishes.
    pub slope: Option<f64>,
}

/// Residuals `|P^a f(x) - P^b f(x) - Delta (a(x) - b(x)) . grad f(x)|` over `deltas`.
pub fn small_delta_check(
    spec_a: &DriftSpec,
    spec_b: &DriftSpec,
    method: Method,
    f: &TestFunction,
    x: &[f64],
    deltas: &[f64],
) -> Result<SmallDeltaReport> {
    if method.is_monte_carlo() {
        return Err(Error::Incompatible {
            method: method.name().into(),
            reason: "the small-Delta check (it needs quadrature operators)".into(),
        });
    }
    let model = TransitionModel { method, seed: 0 };
    let a = spec_a.eval(x);
    let b = spec_b.eval(x);
    let grad = f.gradient(x);
    let linear: f64 = a.iter().zip(&b).zip(&grad).map(|((ai, bi), g)| (ai - bi) * g).sum();
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let pa = TransitionKernel::new(spec_a, &model, delta)?.operator(f, x)?.value;
        let pb = TransitionKernel::new(spec_b, &model, delta)?.operator(f, x)?.value;
        rows.push((delta, (pa - pb - delta * linear).abs()));
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|(_, r)| *r > 0.0) {
        let lx: Vec<f64> = rows.iter().map(|(d, _)| d.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|(_, r)| r.ln()).collect();
        Some(ols_slope(&lx, &ly))
    } else {
        None
    };
    Ok(SmallDeltaReport { rows, slope })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityRow {
    pub h: f64,
    pub max_gap: f64,
    pub std_err: f64,
}

/// For each shift `h`, the largest `|P^b f(x) - P^b f(x + h e_1)|` over the
/// drift family and grid.
pub fn equicontinuity_probe(
    family: &[DriftSpec],
    model: &TransitionModel,
    delta: f64,
    f: &TestFunction,
    grid: &Points,
    shifts: &[f64],
) -> Result<Vec<EquicontinuityRow>> {
    let kernels: Vec<TransitionKernel<'_>> = family
        .iter()
        .map(|s| TransitionKernel::new(s, model, delta))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(shifts.len());
    for &h in shifts {
        let mut best = EquicontinuityRow {
            h,
            max_gap: 0.0,
            std_err: 0.0,
        };
        for k in &kernels {
            for x in grid.iter() {
                let mut xh = x.to_vec();
                xh[0] += h;
                let d = paired_difference(&k.operator_samples(f, x)?, &k.operator_samples(f, &xh)?);
                if d.value.abs() > best.max_gap {
                    best.max_gap = d.value.abs();
                    best.std_err = d.std_err;
                }
            }
        }
        rows.push(best);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSign {
    Plus,
    Minus,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionCell {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub min_gap: f64,
    pub max_gap: f64,
    pub sign: CellSign,
}

/// Signed gaps `P^a f - P^b f` sampled on a cube partition of `[-L, L]^d`
/// with `cells_per_axis^d` cells and `samples_per_axis^d` points per cell.
#[allow(clippy::too_many_arguments)]
pub fn partition_gaps(
    spec_a: &DriftSpec,
    spec_b: &DriftSpec,
    model: &TransitionModel,
    delta: f64,
    f: &TestFunction,
    half_width: f64,
    cells_per_axis: usize,
    samples_per_axis: usize,
) -> Result<Vec<PartitionCell>> {
    if cells_per_axis == 0 || samples_per_axis < 2 {
        return Err(Error::invalid("partition", "needs cells and at least two samples per axis"));
    }
    let dim = spec_a.dim();
    let ka = TransitionKernel::new(spec_a, model, delta)?;
    let kb = TransitionKernel::new(spec_b, model, delta)?;
    let width = 2.0 * half_width / cells_per_axis as f64;
    let mut cells = Vec::new();
    for flat in 0..cells_per_axis.pow(dim as u32) {
        let mut rest = flat;
        let lower: Vec<f64> = (0..dim)
            .map(|_| {
                let k = rest % cells_per_axis;
                rest /= cells_per_axis;
                -half_width + k as f64 * width
            })
            .collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + width).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut x = vec![0.0; dim];
        for s in 0..samples_per_axis.pow(dim as u32) {
            let mut r = s;
            for (i, xi) in x.iter_mut().enumerate() {
                let k = r % samples_per_axis;
                r /= samples_per_axis;
                *xi = lower[i] + width * k as f64 / (samples_per_axis - 1) as f64;
            }
            let gap = ka.operator(f, &x)?.value - kb.operator(f, &x)?.value;
            lo = lo.min(gap);
            hi = hi.max(gap);
        }
        let sign = if lo > 0.0 {
            CellSign::Plus
        } else if hi < 0.0 {
            CellSign::Minus
        } else {
            CellSign::Mixed
        };
        cells.push(PartitionCell {
            lower,
            upper,
            min_gap: lo,
            max_gap: hi,
            sign,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(beta: f64) -> DriftSpec {
        DriftSpec::ou(beta, beta.max(1.0)).unwrap()
    }

    /// Closed-form `P f(x)` for exact OU and `f = cos`: `cos(m) exp(-v / 2)`.
    fn ou_cos(beta: f64, delta: f64, x: f64) -> f64 {
        let m = x * (-beta * delta).exp();
        let v = (1.0 - (-2.0 * beta * delta).exp()) / (2.0 * beta);
        m.cos() * (-v / 2.0).exp()
    }

    #[test]
    fn weak_distance_matches_closed_form_oracle() {
        let nu = GridMeasure::uniform(1, 3.0, 61, 1.0).unwrap();
        let probe = TopologyProbe::new(TestFunction::Cos, nu.clone(), 0.1).unwrap();
        let d = weak_distance(&ou(1.0), &ou(1.2), &TransitionModel::exact_ou(), 0.5, &probe).unwrap();
        let oracle: f64 = nu
            .nodes()
            .iter()
            .zip(nu.weights())
            .map(|(x, w)| w * (ou_cos(1.0, 0.5, x[0]) - ou_cos(1.2, 0.5, x[0])).abs())
            .sum();
        assert!(oracle > 0.0);
        assert!((d.value - oracle).abs() < 1e-12);
        let swapped = weak_distance(&ou(1.2), &ou(1.0), &TransitionModel::exact_ou(), 0.5, &probe).unwrap();
        assert!((swapped.value - d.value).abs() < 1e-14);
        let same = weak_distance(&ou(1.0), &ou(1.0), &TransitionModel::exact_ou(), 0.5, &probe).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn identical_seeds_give_exactly_zero_monte_carlo_distance() {
        let nu = GridMeasure::uniform(1, 2.0, 5, 1.0).unwrap();
        let probe = TopologyProbe::new(TestFunction::Sin, nu, 0.5).unwrap();
        let model = TransitionModel::new(
            Method::GirsanovMc {
                n_paths: 500,
                substeps: 8,
            },
            4,
        )
        .unwrap();
        let d = weak_distance(&ou(1.0), &ou(1.0), &model, 0.5, &probe).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn probe_rejects_oversized_epsilon() {
        let nu = GridMeasure::uniform(1, 1.0, 3, 1.0).unwrap();
        assert!(TopologyProbe::new(TestFunction::Cos, nu, 2.5).is_err());
        assert!(GridMeasure::new(Points::from_flat(1, vec![0.0]), vec![0.0]).is_err());
    }

    #[test]
    fn grid_measure_csv_round_trip() {
        let nu = GridMeasure::uniform(2, 1.0, 3, 2.0).unwrap();
        let mut buf = Vec::new();
        nu.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x1,x2,weight"));
        assert_eq!(GridMeasure::read_csv(buf.as_slice()).unwrap(), nu);
    }

    #[test]
    fn exact_identifiability() {
        let grid = Points::from_flat(1, uniform_grid(2.0, 9));
        let family = [TestFunction::Cos, TestFunction::Tanh, TestFunction::GaussBump];
        let model = TransitionModel::exact_ou();
        let r = identifiability_probe(&ou(1.0), &ou(1.5), &model, 0.5, &family, &grid).unwrap();
        assert!(r.separated);
        // tanh at x = 2 moves its mean from 2e^-0.5 to 2e^-0.75
        assert!(r.max_gap > 0.05);
        let same = identifiability_probe(&ou(1.0), &ou(1.0), &model, 0.5, &family, &grid).unwrap();
        assert_eq!(same.max_gap, 0.0);
        assert!(!same.separated);
    }

    #[test]
    fn small_delta_slope_for_ou() {
        let r = small_delta_check(
            &ou(1.0),
            &ou(1.2),
            Method::ExactOu,
            &TestFunction::Sin,
            &[1.0],
            &[0.2, 0.1, 0.05, 0.025],
        )
        .unwrap();
        assert!(r.slope.unwrap() >= 1.5, "{r:?}");
        let same = small_delta_check(&ou(1.0), &ou(1.0), Method::ExactOu, &TestFunction::Sin, &[1.0], &[0.1, 0.05])
            .unwrap();
        assert!(same.rows.iter().all(|(_, r)| *r == 0.0));
        assert!(same.slope.is_none());
    }

    #[test]
    fn constants_are_preserved() {
        // A smoothed indicator of a huge window is 1 to machine precision near the origin.
        let f = TestFunction::SmoothIndicator {
            a: -1e3,
            b: 1e3,
            sharpness: 10.0,
        };
        let r = small_delta_check(&ou(1.0), &ou(1.7), Method::ExactOu, &f, &[0.5], &[0.1, 0.05]).unwrap();
        assert!(r.rows.iter().all(|(_, res)| *res < 1e-12));
    }

    #[test]
    fn equicontinuity_gap_halves_with_the_shift() {
        let family = [ou(0.5), ou(1.0), ou(2.0)];
        let grid = Points::from_flat(1, uniform_grid(2.0, 9));
        let rows = equicontinuity_probe(
            &family,
            &TransitionModel::exact_ou(),
            0.5,
            &TestFunction::Sin,
            &grid,
            &[0.1, 0.05, 0.025],
        )
        .unwrap();
        for w in rows.windows(2) {
            let ratio = w[0].max_gap / w[1].max_gap;
            assert!((ratio - 2.0).abs() < 0.1, "{rows:?}");
        }
    }

    #[test]
    fn partition_signs_for_ou_pair() {
        let cells = partition_gaps(
            &ou(1.0),
            &ou(1.5),
            &TransitionModel::exact_ou(),
            0.5,
            &TestFunction::Tanh,
            3.0,
            6,
            3,
        )
        .unwrap();
        // The slower drift keeps tanh further from zero: positive right, negative left.
        assert_eq!(cells.first().unwrap().sign, CellSign::Minus);
        assert_eq!(cells.last().unwrap().sign, CellSign::Plus);
        assert!(cells.iter().any(|c| c.sign == CellSign::Mixed));
    }
}
