//! Drift coefficients and their regularity classes.
//!
//! A [`DriftSpec`] pairs a drift `b: R^d -> R^d` with the class constants the
//! user declares for it: the linear growth constant `K` in
//! `|b(x)| <= K (1 + |x|)` and the dissipativity triple `(r, M, alpha)` in
//! `b(x) . x <= -r |x|^alpha` for `|x| >= M`. The constants are never
//! inferred; [`validate_drift`] audits them on a grid.

mod stationary;

pub use stationary::{
    sample_stationary, scale_function, stationary_density_1d, stationary_density_potential,
    QuadratureConfig, QuadratureMethod, StationaryLaw, StationarySample,
};

use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Dissipativity constants `(r, M, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipativity {
    pub r: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

/// Built-in one-dimensional parametric drifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricId {
    /// `b(x) = a - beta x`, params `[a, beta]`.
    Linear,
    /// `b(x) = -a tanh(x / c)`, params `[a, c]`.
    Tanh,
    /// `b(x) = -beta x + amp sin(freq x)`, params `[beta, amp, freq]`.
    PerturbedLinear,
    /// `b(x) = -a clamp(x, -c, c)`, params `[a, c]`.
    Clipped,
}

impl ParametricId {
    fn arity(self) -> usize {
        match self {
            ParametricId::Linear | ParametricId::Tanh | ParametricId::Clipped => 2,
            ParametricId::PerturbedLinear => 3,
        }
    }

    fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            ParametricId::Linear => p[0] - p[1] * x,
            ParametricId::Tanh => -p[0] * (x / p[1]).tanh(),
            ParametricId::PerturbedLinear => -p[0] * x + p[1] * (p[2] * x).sin(),
            ParametricId::Clipped => -p[0] * x.clamp(-p[1], p[1]),
        }
    }
}

/// Radial profile `f` of a gradient drift `b_f(x) = -2 f'(|x|^2) x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `f(s) = slope * s`; the drift is Ornstein-Uhlenbeck with rate `2 slope`.
    Linear { slope: f64 },
    /// `f(s) = slope * s + log_coef * ln(1 + s)`.
    LogLinear { slope: f64, log_coef: f64 },
}

impl Profile {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Profile::Linear { slope } => slope * s,
            Profile::LogLinear { slope, log_coef } => slope * s + log_coef * s.ln_1p(),
        }
    }

    pub fn first(&self, s: f64) -> f64 {
        match *self {
            Profile::Linear { slope } => slope,
            Profile::LogLinear { slope, log_coef } => slope + log_coef / (1.0 + s),
        }
    }

    pub fn second(&self, s: f64) -> f64 {
        match *self {
            Profile::Linear { .. } => 0.0,
            Profile::LogLinear { log_coef, .. } => -log_coef / (1.0 + s).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileTail {
    #[serde(rename = "M_f")]
    pub m_f: f64,
    pub r_f: f64,
}

/// Potential `V(x) = f(|x|^2)` with the constants of the profile class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub profile: Profile,
    #[serde(rename = "lipschitz_K2")]
    pub lipschitz_k2: f64,
    pub tail: ProfileTail,
}

impl PotentialSpec {
    pub fn potential(&self, x: &[f64]) -> f64 {
        self.profile.value(norm_sq(x))
    }
}

/// Piecewise-linear table; component `i` is evaluated at coordinate `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Tabulated {
    fn interpolate(&self, component: usize, x: f64) -> f64 {
        let g = &self.grid;
        let v = &self.values[component];
        let n = g.len();
        // Outside the table the boundary segment's slope is continued.
        let k = match g.partition_point(|&node| node <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        };
        let t = (x - g[k]) / (g[k + 1] - g[k]);
        v[k] + t * (v[k + 1] - v[k])
    }

    /// Exact `int_0^x` of the interpolant of `component`.
    fn antiderivative(&self, component: usize, x: f64) -> f64 {
        let (lo, hi, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
        let mut cuts = vec![lo];
        cuts.extend(self.grid.iter().copied().filter(|&g| g > lo && g < hi));
        cuts.push(hi);
        let total: f64 = cuts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.interpolate(component, w[0]) + self.interpolate(component, w[1])))
            .sum();
        sign * total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    Ou {
        beta: f64,
    },
    #[serde(rename = "parametric_1d")]
    Parametric1d {
        id: ParametricId,
        params: Vec<f64>,
    },
    Potential(PotentialSpec),
    Tabulated(Tabulated),
}

#[derive(Serialize, Deserialize)]
struct DriftDocument {
    dim: usize,
    form: DriftForm,
    #[serde(rename = "growth_K")]
    growth_k: f64,
    dissipativity: Dissipativity,
}

/// A drift coefficient together with its declared class constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DriftDocument", into = "DriftDocument")]
pub struct DriftSpec {
    dim: usize,
    form: DriftForm,
    growth_k: f64,
    dissipativity: Dissipativity,
}

impl TryFrom<DriftDocument> for DriftSpec {
    type Error = Error;

    fn try_from(doc: DriftDocument) -> Result<Self> {
        DriftSpec::new(doc.dim, doc.form, doc.growth_k, doc.dissipativity)
    }
}

impl From<DriftSpec> for DriftDocument {
    fn from(s: DriftSpec) -> Self {
        DriftDocument {
            dim: s.dim,
            form: s.form,
            growth_k: s.growth_k,
            dissipativity: s.dissipativity,
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl DriftSpec {
    pub fn new(
        dim: usize,
        form: DriftForm,
        growth_k: f64,
        dissipativity: Dissipativity,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        positive("growth_K", growth_k)?;
        positive("dissipativity.r", dissipativity.r)?;
        positive("dissipativity.M", dissipativity.m)?;
        if !(dissipativity.alpha >= 1.0) {
            return Err(Error::invalid("dissipativity.alpha", "must be >= 1"));
        }
        if dim == 1 && dissipativity.alpha != 1.0 {
            return Err(Error::invalid(
                "dissipativity.alpha",
                "is fixed to 1 in one dimension",
            ));
        }
        match &form {
            DriftForm::Ou { beta } => positive("beta", *beta)?,
            DriftForm::Parametric1d { id, params } => {
                if dim != 1 {
                    return Err(Error::invalid("dim", "parametric drifts are one-dimensional"));
                }
                if params.len() != id.arity() || params.iter().any(|p| !p.is_finite()) {
                    return Err(Error::invalid(
                        "params",
                        format!("{id:?} takes {} finite parameters", id.arity()),
                    ));
                }
                if matches!(id, ParametricId::Tanh | ParametricId::Clipped) {
                    positive("params[1]", params[1])?;
                }
            }
            DriftForm::Potential(p) => {
                positive("lipschitz_K2", p.lipschitz_k2)?;
                positive("tail.M_f", p.tail.m_f)?;
                positive("tail.r_f", p.tail.r_f)?;
                let ok = match p.profile {
                    Profile::Linear { slope } => slope.is_finite(),
                    Profile::LogLinear { slope, log_coef } => {
                        slope.is_finite() && log_coef.is_finite()
                    }
                };
                if !ok {
                    return Err(Error::invalid("profile", "coefficients must be finite"));
                }
            }
            DriftForm::Tabulated(t) => {
                if t.grid.len() < 2 {
                    return Err(Error::invalid("grid", "needs at least two nodes"));
                }
                if t.grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("grid", "must be strictly ascending"));
                }
                if t.values.len() != dim || t.values.iter().any(|v| v.len() != t.grid.len()) {
                    return Err(Error::invalid(
                        "values",
                        "need one row per component, parallel to the grid",
                    ));
                }
                if t.values.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("values", "must be finite"));
                }
            }
        }
        Ok(DriftSpec {
            dim,
            form,
            growth_k,
            dissipativity,
        })
    }

    /// One-dimensional `b(x) = -beta x` with `r = beta`, `M = 1`.
    pub fn ou(beta: f64, growth_k: f64) -> Result<Self> {
        Self::new(
            1,
            DriftForm::Ou { beta },
            growth_k,
            Dissipativity {
                r: beta,
                m: 1.0,
                alpha: 1.0,
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &DriftForm {
        &self.form
    }

    pub fn growth_k(&self) -> f64 {
        self.growth_k
    }

    pub fn dissipativity(&self) -> Dissipativity {
        self.dissipativity
    }

    /// Mean-reversion rate when the drift is `b(x) = -beta x` coordinate-wise.
    pub fn ou_rate(&self) -> Option<f64> {
        match self.form {
            DriftForm::Ou { beta } => Some(beta),
            DriftForm::Potential(PotentialSpec {
                profile: Profile::Linear { slope },
                ..
            }) if slope > 0.0 => Some(2.0 * slope),
            _ => None,
        }
    }

    /// `V` with `b = -grad V` and `V(0) = 0`, for every form that is a gradient
    /// in all dimensions (parametric drifts are one-dimensional and excluded).
    pub fn potential(&self, x: &[f64]) -> Option<f64> {
        match &self.form {
            DriftForm::Ou { beta } => Some(0.5 * beta * norm_sq(x)),
            DriftForm::Potential(p) => Some(p.potential(x) - p.profile.value(0.0)),
            DriftForm::Tabulated(t) => Some(
                x.iter()
                    .enumerate()
                    .map(|(i, &xi)| -t.antiderivative(i, xi))
                    .sum(),
            ),
            DriftForm::Parametric1d { .. } => None,
        }
    }

    pub fn potential_spec(&self) -> Option<&PotentialSpec> {
        match &self.form {
            DriftForm::Potential(p) => Some(p),
            _ => None,
        }
    }

    /// Half-width `M + 25 / r` beyond which stationary mass is negligible.
    pub fn default_half_width(&self) -> f64 {
        self.dissipativity.m + 25.0 / self.dissipativity.r
    }

    /// Writes `b(x)` into `out`.
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match &self.form {
            DriftForm::Ou { beta } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -beta * xi;
                }
            }
            DriftForm::Parametric1d { id, params } => out[0] = id.eval(params, x[0]),
            DriftForm::Potential(p) => {
                let scale = -2.0 * p.profile.first(norm_sq(x));
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = scale * xi;
                }
            }
            DriftForm::Tabulated(t) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = t.interpolate(i, x[i]);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Scalar drift; only meaningful when `dim() == 1`.
    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        match &self.form {
            DriftForm::Ou { beta } => -beta * x,
            DriftForm::Parametric1d { id, params } => id.eval(params, x),
            DriftForm::Potential(p) => -2.0 * p.profile.first(x * x) * x,
            DriftForm::Tabulated(t) => t.interpolate(0, x),
        }
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `|b(x)| <= K (1 + |x|)`.
    Growth,
    /// `b(x) . x <= -r |x|^alpha` for `|x| >= M`.
    Dissipativity,
    /// `|f'(s)| <= K / 2`.
    ProfileSlope,
    /// `4 s |f''(s)| + 2 |f'(s)| <= K_2`.
    ProfileCurvature,
    /// `f'(s) >= r_f` for `s >= M_f`.
    ProfileTail,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constraint::Growth => "linear growth |b(x)| <= K(1+|x|)",
            Constraint::Dissipativity => "dissipativity b(x).x <= -r|x|^alpha for |x| >= M",
            Constraint::ProfileSlope => "profile slope |f'(s)| <= K/2",
            Constraint::ProfileCurvature => "profile curvature 4s|f''(s)| + 2|f'(s)| <= K2",
            Constraint::ProfileTail => "profile tail f'(s) >= r_f for s >= M_f",
        })
    }
}

/// One grid point where a declared constraint fails; `slack > 0` measures by how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub point: Vec<f64>,
    pub slack: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at {:?} (slack {:.6})", self.constraint, self.point, self.slack)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, c: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }

    /// Violations of `c` sorted by point.
    pub fn of(&self, c: Constraint) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.constraint == c)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("compliant");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Validation points: the tensor grid on `[-L, L]^d` for `d <= 3`, otherwise
/// `grid_points` radii along 64·d seeded random directions plus the axes.
fn validation_points(dim: usize, half_width: f64, grid_points: usize) -> Vec<Vec<f64>> {
    let axis = crate::quadrature::uniform_grid(half_width, grid_points);
    if dim <= 3 {
        let total = grid_points.pow(dim as u32);
        return (0..total)
            .map(|flat| {
                let mut rest = flat;
                (0..dim)
                    .map(|_| {
                        let v = axis[rest % grid_points];
                        rest /= grid_points;
                        v
                    })
                    .collect()
            })
            .collect();
    }
    let mut rng = rng::stream(0x7a11_d47e, 0);
    let mut directions: Vec<Vec<f64>> = (0..dim)
        .flat_map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            [e, neg]
        })
        .collect();
    for _ in 0..64 * dim {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm_sq(&v).sqrt();
        directions.push(v.into_iter().map(|c| c / n).collect());
    }
    let radial = crate::quadrature::uniform_grid(half_width * (dim as f64).sqrt(), 2 * grid_points - 1);
    let radii: Vec<f64> = radial.into_iter().filter(|r| *r >= 0.0).collect();
    directions
        .iter()
        .flat_map(|u| radii.iter().map(move |r| u.iter().map(|c| c * r).collect()))
        .collect()
}

/// Audits the declared class constants on a validation grid of half-width `grid_halfwidth`.
pub fn validate_drift(
    spec: &DriftSpec,
    grid_halfwidth: f64,
    grid_points: usize,
) -> Result<ValidationReport> {
    if grid_points < 2 {
        return Err(Error::invalid("grid_points", "must be at least 2"));
    }
    positive("grid_halfwidth", grid_halfwidth)?;
    let Dissipativity { r, m, alpha } = spec.dissipativity;
    let mut report = ValidationReport::default();
    let mut b = vec![0.0; spec.dim];
    for x in validation_points(spec.dim, grid_halfwidth, grid_points) {
        spec.eval_into(&x, &mut b);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDrift { point: x });
        }
        let norm_x = norm_sq(&x).sqrt();
        let growth = norm_sq(&b).sqrt() - spec.growth_k * (1.0 + norm_x);
        if growth > 1e-12 * (1.0 + norm_x) {
            report.violations.push(Violation {
                constraint: Constraint::Growth,
                point: x.clone(),
                slack: growth,
            });
        }
        if norm_x >= m {
            let inner: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
            let slack = inner + r * norm_x.powf(alpha);
            if slack > 1e-12 * (1.0 + norm_x.powf(alpha)) {
                report.violations.push(Violation {
                    constraint: Constraint::Dissipativity,
                    point: x,
                    slack,
                });
            }
        }
    }
    if let Some(p) = spec.potential_spec() {
        audit_profile(p, spec.growth_k, spec.dim as f64 * grid_halfwidth.powi(2), grid_points, &mut report);
    }
    Ok(report)
}

/// Checks the profile constraints on `s` in `[0, s_max]`; violations report `[s]` as the point.
fn audit_profile(
    p: &PotentialSpec,
    growth_k: f64,
    s_max: f64,
    grid_points: usize,
    report: &mut ValidationReport,
) {
    let n = (4 * grid_points).max(64);
    for k in 0..=n {
        let s = s_max * k as f64 / n as f64;
        let f1 = p.profile.first(s);
        let f2 = p.profile.second(s);
        let mut push = |constraint, slack: f64| {
            if slack > 1e-12 {
                report.violations.push(Violation {
                    constraint,
                    point: vec![s],
                    slack,
                });
            }
        };
        push(Constraint::ProfileSlope, f1.abs() - 0.5 * growth_k);
        push(
            Constraint::ProfileCurvature,
            4.0 * s * f2.abs() + 2.0 * f1.abs() - p.lipschitz_k2,
        );
        if s >= p.tail.m_f {
            push(Constraint::ProfileTail, p.tail.r_f - f1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diss(r: f64, m: f64) -> Dissipativity {
        Dissipativity { r, m, alpha: 1.0 }
    }

    #[test]
    fn ou_unit_rate_is_compliant() {
        let spec = DriftSpec::new(1, DriftForm::Ou { beta: 1.0 }, 1.0, diss(0.5, 1.0)).unwrap();
        let report = validate_drift(&spec, 10.0, 101).unwrap();
        assert!(report.is_compliant(), "{report}");
    }

    #[test]
    fn steep_ou_violates_growth_at_the_boundary() {
        let spec = DriftSpec::new(1, DriftForm::Ou { beta: 2.0 }, 1.0, diss(0.5, 1.0)).unwrap();
        let report = validate_drift(&spec, 10.0, 101).unwrap();
        let at_ten = report
            .of(Constraint::Growth)
            .find(|v| (v.point[0] - 10.0).abs() < 1e-12)
            .expect("x = 10 flagged");
        // |-2 * 10| - 1 * (1 + 10)
        assert_relative_eq!(at_ten.slack, 9.0, epsilon = 1e-12);
        assert!(!report.violates(Constraint::Dissipativity));
    }

    #[test]
    fn cubic_table_violates_growth_at_two() {
        let grid: Vec<f64> = (0..=100).map(|k| -5.0 + 0.1 * k as f64).collect();
        let values = vec![grid.iter().map(|x| -x * x * x).collect()];
        let spec = DriftSpec::new(
            1,
            DriftForm::Tabulated(Tabulated { grid, values }),
            1.0,
            diss(0.5, 1.0),
        )
        .unwrap();
        let report = validate_drift(&spec, 5.0, 101).unwrap();
        let at_two = report
            .of(Constraint::Growth)
            .find(|v| (v.point[0] - 2.0).abs() < 1e-9)
            .expect("x = 2 flagged");
        assert_relative_eq!(at_two.slack, 8.0 - 3.0, epsilon = 1e-9);
        // |x| <= 1 is fine: |x^3| <= 1 + |x|
        assert!(report.of(Constraint::Growth).all(|v| v.point[0].abs() > 1.0));
    }

    #[test]
    fn table_extrapolates_with_boundary_slope() {
        let t = Tabulated {
            grid: vec![-1.0, 0.0, 1.0],
            values: vec![vec![2.0, 0.0, -3.0]],
        };
        assert_relative_eq!(t.interpolate(0, 3.0), -9.0);
        assert_relative_eq!(t.interpolate(0, -2.0), 4.0);
        assert_relative_eq!(t.interpolate(0, 0.5), -1.5);
        // int_0^2 of -3x on [0,1] then -3 - 3(x-1) on [1,2]
        assert_relative_eq!(t.antiderivative(0, 2.0), -1.5 - 4.5, epsilon = 1e-12);
        assert_relative_eq!(t.antiderivative(0, -1.5), -(1.0 + 0.25 * 2.0 * 0.5 + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_malformed_specs() {
        let bad_grid = DriftForm::Tabulated(Tabulated {
            grid: vec![0.0, 0.0, 1.0],
            values: vec![vec![0.0; 3]],
        });
        assert!(DriftSpec::new(1, bad_grid, 1.0, diss(1.0, 1.0)).is_err());
        assert!(DriftSpec::new(1, DriftForm::Ou { beta: -1.0 }, 1.0, diss(1.0, 1.0)).is_err());
        let alpha2 = Dissipativity {
            r: 1.0,
            m: 1.0,
            alpha: 2.0,
        };
        assert!(DriftSpec::new(1, DriftForm::Ou { beta: 1.0 }, 1.0, alpha2).is_err());
    }

    #[test]
    fn non_finite_drift_names_the_point() {
        let spec = DriftSpec::new(
            1,
            DriftForm::Parametric1d {
                id: ParametricId::Linear,
                params: vec![0.0, 1.0],
            },
            1.0,
            diss(0.5, 1.0),
        )
        .unwrap();
        assert!(validate_drift(&spec, f64::INFINITY, 3).is_err());
    }

    #[test]
    fn potential_gradient_matches_finite_differences() {
        use rand::Rng;
        let p = PotentialSpec {
            profile: Profile::LogLinear {
                slope: 0.6,
                log_coef: -0.3,
            },
            lipschitz_k2: 4.0,
            tail: ProfileTail { m_f: 1.0, r_f: 0.3 },
        };
        let spec = DriftSpec::new(
            3,
            DriftForm::Potential(p),
            2.0,
            Dissipativity {
                r: 0.5,
                m: 2.0,
                alpha: 2.0,
            },
        )
        .unwrap();
        let mut rng = rng::stream(11, 0);
        let h = 1e-5;
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b = spec.eval(&x);
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = -(p.potential(&xp) - p.potential(&xm)) / (2.0 * h);
                assert!(
                    (fd - b[i]).abs() <= 1e-5 * b[i].abs().max(1e-3),
                    "component {i} at {x:?}: fd {fd} vs {}",
                    b[i]
                );
            }
        }
    }

    #[test]
    fn profile_audit_flags_steep_slopes() {
        let p = PotentialSpec {
            profile: Profile::Linear { slope: 1.0 },
            lipschitz_k2: 1.0,
            tail: ProfileTail { m_f: 1.0, r_f: 0.5 },
        };
        let spec = DriftSpec::new(
            2,
            DriftForm::Potential(p),
            1.0,
            Dissipativity {
                r: 1.0,
                m: 1.0,
                alpha: 2.0,
            },
        )
        .unwrap();
        let report = validate_drift(&spec, 3.0, 11).unwrap();
        assert!(report.violates(Constraint::ProfileSlope));
        assert!(report.violates(Constraint::ProfileCurvature));
        assert!(!report.violates(Constraint::ProfileTail));
    }

    #[test]
    fn json_document_round_trips() {
        let json = r#"{"dim":1,"form":{"ou":{"beta":1.0}},"growth_K":1.0,
                       "dissipativity":{"r":0.5,"M":1.0,"alpha":1.0}}"#;
        let spec: DriftSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.ou_rate(), Some(1.0));
        let back: DriftSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = json.replace("\"beta\":1.0", "\"beta\":0.0");
        assert!(serde_json::from_str::<DriftSpec>(&bad).is_err());
    }
}
