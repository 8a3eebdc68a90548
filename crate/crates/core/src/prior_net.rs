//! Discrete priors built from finite sup-norm coverings of a drift family.
//!
//! For every cube size `m` and accuracy level `l`, the prior places equal mass
//! on the `n_{m,l}` atoms of an `epsilon_l`-covering of the family in the
//! metric `||b||_{d,m,inf} = max_i sup_{[-m,m]^d} |b_i|`. The block `(m, l)`
//! carries total mass `q1[m] * q2[l]`.

use crate::divergence::l2_mu_distance;
use crate::drift::{
    Dissipativity, DriftForm, DriftSpec, PotentialSpec, Profile, ProfileTail, StationaryLaw,
};
use crate::error::{Error, Result, Warning};
use crate::quadrature::{legendre_panels, uniform_grid};
use crate::rng;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parametric generators of gradient drifts `b_f = -2 f'(|x|^2) x`.
///
/// Both generators are affine in their parameters, so the sup-gap between a
/// member and a parameter cell's centre is largest at a corner of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `f_beta(s) = beta s / 2` in one dimension, i.e. `b(x) = -beta x`, for
    /// `beta` in `(beta_min, beta_max]`.
    Ou { beta_min: f64, beta_max: f64 },
    /// `f(s) = a s + c ln(1 + s)` in `dim` dimensions over a box of `(a, c)`.
    LogLinear {
        dim: usize,
        slope: [f64; 2],
        log_coef: [f64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionFamily {
    pub kind: FamilyKind,
    /// Shared growth constant `K_1`.
    #[serde(rename = "growth_K1")]
    pub growth_k1: f64,
    /// Shared Lipschitz constant `K_2`.
    #[serde(rename = "lipschitz_K2")]
    pub lipschitz_k2: f64,
    /// Coefficients of the polynomial envelope `G`, lowest degree first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub envelope: Vec<f64>,
}

const ENVELOPE_S_MAX: f64 = 100.0;
const ENVELOPE_POINTS: usize = 400;

impl FunctionFamily {
    pub fn ou(beta_min: f64, beta_max: f64, growth_k1: f64) -> Result<Self> {
        let family = FunctionFamily {
            kind: FamilyKind::Ou { beta_min, beta_max },
            growth_k1,
            lipschitz_k2: growth_k1,
            envelope: Vec::new(),
        };
        family.check()?;
        Ok(family)
    }

    pub fn log_linear(dim: usize, slope: [f64; 2], log_coef: [f64; 2], growth_k1: f64, lipschitz_k2: f64) -> Result<Self> {
        let family = FunctionFamily {
            kind: FamilyKind::LogLinear {
                dim,
                slope,
                log_coef,
            },
            growth_k1,
            lipschitz_k2,
            envelope: Vec::new(),
        };
        family.check()?;
        Ok(family)
    }

    pub fn check(&self) -> Result<()> {
        match self.kind {
            FamilyKind::Ou { beta_min, beta_max } => {
                if !(beta_min >= 0.0 && beta_max > beta_min && beta_max.is_finite()) {
                    return Err(Error::invalid("family", "needs 0 <= beta_min < beta_max"));
                }
            }
            FamilyKind::LogLinear {
                dim,
                slope,
                log_coef,
            } => {
                if dim == 0 || !(slope[1] > slope[0]) || !(log_coef[1] >= log_coef[0]) {
                    return Err(Error::invalid("family", "needs ascending parameter bounds"));
                }
                // f'(s) = a + c / (1 + s) must stay positive for dissipativity.
                if !(slope[0] + log_coef[0].min(0.0) > 0.0) {
                    return Err(Error::invalid("family", "a + min(c, 0) must be positive"));
                }
            }
        }
        if !(self.growth_k1 > 0.0 && self.lipschitz_k2 > 0.0) {
            return Err(Error::invalid("family", "constants must be positive"));
        }
        self.check_envelope()
    }

    /// Profile `f(s)` of the member with parameters `theta`.
    fn profile_value(&self, theta: &[f64], s: f64) -> f64 {
        match self.kind {
            FamilyKind::Ou { .. } => 0.5 * theta[0] * s,
            FamilyKind::LogLinear { .. } => theta[0] * s + theta[1] * s.ln_1p(),
        }
    }

    /// `|f(s)| <= G(s)` on `s in [0, ENVELOPE_S_MAX]`. `|f(s)|` is convex in the
    /// parameters, so the corners of the box bound every member.
    fn check_envelope(&self) -> Result<()> {
        if self.envelope.is_empty() {
            return Ok(());
        }
        let g = |s: f64| self.envelope.iter().rev().fold(0.0, |acc, c| acc * s + c);
        let bounds = self.bounds();
        for corner in 0..1usize << bounds.len() {
            let theta: Vec<f64> = bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if corner >> i & 1 == 0 { lo } else { hi })
                .collect();
            for k in 0..=ENVELOPE_POINTS {
                let s = ENVELOPE_S_MAX * k as f64 / ENVELOPE_POINTS as f64;
                let f = self.profile_value(&theta, s).abs();
                if f > g(s) {
                    return Err(Error::invalid(
                        "envelope",
                        format!("|f(s)| = {f:.6} exceeds G(s) = {:.6} at s = {s} for parameters {theta:?}", g(s)),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            FamilyKind::Ou { .. } => 1,
            FamilyKind::LogLinear { dim, .. } => dim,
        }
    }

    pub fn param_dim(&self) -> usize {
        match self.kind {
            FamilyKind::Ou { .. } => 1,
            FamilyKind::LogLinear { .. } => 2,
        }
    }

    /// Parameter box as `(lower, upper)` per coordinate.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self.kind {
            FamilyKind::Ou { beta_min, beta_max } => vec![(beta_min, beta_max)],
            FamilyKind::LogLinear {
                slope, log_coef, ..
            } => vec![(slope[0], slope[1]), (log_coef[0], log_coef[1])],
        }
    }

    /// The family member with parameters `theta`.
    pub fn member(&self, theta: &[f64]) -> Result<DriftSpec> {
        match self.kind {
            FamilyKind::Ou { .. } => {
                let beta = theta[0];
                DriftSpec::new(
                    1,
                    DriftForm::Ou { beta },
                    self.growth_k1,
                    Dissipativity {
                        r: beta,
                        m: 1.0,
                        alpha: 1.0,
                    },
                )
            }
            FamilyKind::LogLinear { dim, .. } => {
                let (a, c) = (theta[0], theta[1]);
                // b(x) . x = -2 (a + c / (1 + s)) s <= -2 (a + min(c, 0)) s
                let r_f = a + c.min(0.0);
                DriftSpec::new(
                    dim,
                    DriftForm::Potential(PotentialSpec {
                        profile: Profile::LogLinear {
                            slope: a,
                            log_coef: c,
                        },
                        lipschitz_k2: self.lipschitz_k2,
                        tail: ProfileTail { m_f: 1.0, r_f },
                    }),
                    self.growth_k1,
                    Dissipativity {
                        r: 2.0 * r_f,
                        m: 1.0,
                        alpha: if dim == 1 { 1.0 } else { 2.0 },
                    },
                )
            }
        }
    }

    /// Uniform draw from the parameter box, never on a lower bound.
    fn sample(&self, rng: &mut rng::Rng) -> Vec<f64> {
        self.bounds()
            .iter()
            .map(|(lo, hi)| hi - (hi - lo) * rng.random::<f64>())
            .collect()
    }
}

/// Grid points per axis used by [`sup_metric`] inside nets.
pub fn sup_grid_points(dim: usize) -> usize {
    match dim {
        1 => 201,
        2 => 61,
        _ => 21,
    }
}

fn sup_points(dim: usize, m: f64, grid_points: usize) -> Vec<Vec<f64>> {
    if dim <= 3 {
        let axis = uniform_grid(m, grid_points);
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
    let mut rng = rng::stream(0x5e9, dim as u64);
    let mut pts = Vec::new();
    for k in 0..grid_points * dim * 8 {
        let mut x: Vec<f64> = (0..dim).map(|_| m * (2.0 * rng.random::<f64>() - 1.0)).collect();
        if k % 2 == 0 {
            // Half of the points sit on a face of the cube.
            let axis = (k / 2) % dim;
            x[axis] = if rng.random::<bool>() { m } else { -m };
        }
        pts.push(x);
    }
    pts
}

/// `max_i sup_{x in [-m,m]^d} |a_i(x) - b_i(x)|` on a grid.
pub fn sup_metric(spec_a: &DriftSpec, spec_b: &DriftSpec, m: f64, grid_points: usize) -> Result<f64> {
    if spec_a.dim() != spec_b.dim() {
        return Err(Error::invalid("sup_metric", "dimensions differ"));
    }
    if grid_points < 2 || !(m > 0.0) {
        return Err(Error::invalid("sup_metric", "needs m > 0 and at least two grid points"));
    }
    let dim = spec_a.dim();
    let mut ba = vec![0.0; dim];
    let mut bb = vec![0.0; dim];
    let mut sup: f64 = 0.0;
    for x in sup_points(dim, m, grid_points) {
        spec_a.eval_into(&x, &mut ba);
        spec_b.eval_into(&x, &mut bb);
        for (p, q) in ba.iter().zip(&bb) {
            sup = sup.max((p - q).abs());
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub spec: DriftSpec,
    pub params: Vec<f64>,
    pub m: usize,
    pub l: usize,
    /// Position within the `(m, l)` block.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSettings {
    pub m_max: usize,
    pub l_max: usize,
    pub eps_schedule: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    /// Cap on atoms per `(m, l)` block.
    pub atom_cap: usize,
    pub seed: u64,
}

impl NetSettings {
    /// `q_j = 2^-j` for both sequences and a cap of 10^5 atoms per block.
    pub fn dyadic(m_max: usize, l_max: usize, eps_schedule: Vec<f64>, seed: u64) -> Self {
        let dyadic = |n: usize| (1..=n).map(|j| 0.5f64.powi(j as i32)).collect();
        NetSettings {
            m_max,
            l_max,
            eps_schedule,
            q1: dyadic(m_max),
            q2: dyadic(l_max),
            atom_cap: 100_000,
            seed,
        }
    }

    fn check(&self) -> Result<()> {
        if self.m_max == 0 || self.l_max == 0 {
            return Err(Error::invalid("net", "m_max and l_max must be positive"));
        }
        if self.eps_schedule.len() < self.l_max {
            return Err(Error::invalid("eps_schedule", "needs l_max entries"));
        }
        let eps = &self.eps_schedule[..self.l_max];
        if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("eps_schedule", "must be positive and strictly decreasing"));
        }
        for (name, q, n) in [("q1", &self.q1, self.m_max), ("q2", &self.q2, self.l_max)] {
            if q.len() < n || q[..n].iter().any(|v| !(*v > 0.0)) || q[..n].iter().sum::<f64>() > 1.0 + 1e-12 {
                return Err(Error::invalid(name, "needs positive entries with partial sums <= 1"));
            }
        }
        Ok(())
    }
}

/// A discrete prior `sum_j w_j delta_{b_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorNet {
    #[serde(default = "default_id")]
    pub id: String,
    pub atoms: Vec<Atom>,
    pub weights: Vec<f64>,
    pub eps_schedule: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    /// Block sizes `n_{m,l}`, indexed `[m - 1][l - 1]`.
    pub block_sizes: Vec<Vec<usize>>,
    /// Mass `1 - sum q1[m] q2[l]` lost to truncation before renormalization.
    pub truncation_mass: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FunctionFamily>,
}

fn default_id() -> String {
    "net".into()
}

impl PriorNet {
    /// A net with explicit atoms; weights are normalized.
    pub fn explicit(specs: Vec<DriftSpec>, weights: Vec<f64>) -> Result<Self> {
        if specs.is_empty() || specs.len() != weights.len() {
            return Err(Error::invalid("net", "needs one positive weight per atom"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights", "must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        let n = specs.len();
        Ok(PriorNet {
            id: default_id(),
            atoms: specs
                .into_iter()
                .enumerate()
                .map(|(index, spec)| Atom {
                    spec,
                    params: Vec::new(),
                    m: 1,
                    l: 1,
                    index,
                })
                .collect(),
            weights: weights.iter().map(|w| w / total).collect(),
            eps_schedule: Vec::new(),
            q1: vec![1.0],
            q2: vec![1.0],
            block_sizes: vec![vec![n]],
            truncation_mass: 0.0,
            warnings: Vec::new(),
            family: None,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn specs(&self) -> impl Iterator<Item = &DriftSpec> {
        self.atoms.iter().map(|a| &a.spec)
    }

    /// Stationary laws of all atoms, computed in parallel.
    pub fn laws(&self, config: &crate::drift::QuadratureConfig) -> Result<Vec<StationaryLaw>> {
        self.atoms
            .par_iter()
            .map(|a| StationaryLaw::new(&a.spec, config))
            .collect()
    }
}

/// Cells per axis for an `epsilon`-covering of the box at cube size `m`.
///
/// Starting from one cell per axis, the axis whose corner offset alone has the
/// largest sup-gap gains a cell until every corner offset is within `epsilon`.
fn covering_counts(family: &FunctionFamily, m: f64, eps: f64, cap: usize) -> Result<Option<Vec<usize>>> {
    let bounds = family.bounds();
    let p = bounds.len();
    let centre: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let base = family.member(&centre)?;
    // Affinity lets the offset be halved and the gap doubled, keeping the
    // evaluated member strictly inside the box.
    let gap = |offset: &[f64]| -> Result<f64> {
        let theta: Vec<f64> = centre.iter().zip(offset).map(|(c, o)| c + 0.5 * o).collect();
        Ok(2.0 * sup_metric(&base, &family.member(&theta)?, m, sup_grid_points(family.dim()))?)
    };
    let mut counts = vec![1usize; p];
    loop {
        let half: Vec<f64> = bounds
            .iter()
            .zip(&counts)
            .map(|((lo, hi), n)| 0.5 * (hi - lo) / *n as f64)
            .collect();
        let mut worst: f64 = 0.0;
        for corner in 0..(1usize << p) {
            let offset: Vec<f64> = (0..p)
                .map(|j| if corner >> j & 1 == 1 { half[j] } else { -half[j] })
                .collect();
            worst = worst.max(gap(&offset)?);
        }
        if worst <= eps {
            return Ok(Some(counts));
        }
        let mut axis_gaps = Vec::with_capacity(p);
        for j in 0..p {
            let mut offset = vec![0.0; p];
            offset[j] = half[j];
            axis_gaps.push(gap(&offset)?);
        }
        let axis = (0..p)
            .max_by(|&a, &b| axis_gaps[a].total_cmp(&axis_gaps[b]))
            .expect("non-empty parameter box");
        counts[axis] += 1;
        if counts.iter().product::<usize>() > cap {
            return Ok(None);
        }
    }
}

fn cell_centres(bounds: &[(f64, f64)], counts: &[usize]) -> Vec<Vec<f64>> {
    let total: usize = counts.iter().product();
    (0..total)
        .map(|flat| {
            let mut rest = flat;
            bounds
                .iter()
                .zip(counts)
                .map(|((lo, hi), &n)| {
                    let k = rest % n;
                    rest /= n;
                    lo + (hi - lo) * (k as f64 + 0.5) / n as f64
                })
                .collect()
        })
        .collect()
}

/// Builds the truncated prior over `(m, l) in [1, m_max] x [1, l_max]` and audits it.
pub fn build_net(family: &FunctionFamily, settings: &NetSettings) -> Result<PriorNet> {
    family.check()?;
    settings.check()?;
    let bounds = family.bounds();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    let mut block_sizes = vec![vec![0; settings.l_max]; settings.m_max];
    for m in 1..=settings.m_max {
        for l in 1..=settings.l_max {
            let eps = settings.eps_schedule[l - 1];
            let counts = covering_counts(family, m as f64, eps, settings.atom_cap)?
                .ok_or(Error::Capacity {
                    m,
                    l,
                    cap: settings.atom_cap,
                })?;
            let centres = cell_centres(&bounds, &counts);
            let n = centres.len();
            block_sizes[m - 1][l - 1] = n;
            let w = settings.q1[m - 1] * settings.q2[l - 1] / n as f64;
            for (index, theta) in centres.into_iter().enumerate() {
                atoms.push(Atom {
                    spec: family.member(&theta)?,
                    params: theta,
                    m,
                    l,
                    index,
                });
                weights.push(w);
            }
        }
    }
    let kept: f64 = weights.iter().sum();
    let truncation_mass = 1.0 - kept;
    let mut warnings = Vec::new();
    if truncation_mass > 0.0 {
        warnings.push(Warning::Truncated {
            mass: truncation_mass,
        });
    }
    let net = PriorNet {
        id: match family.kind {
            FamilyKind::Ou { .. } => "ou-net".into(),
            FamilyKind::LogLinear { .. } => "log-linear-net".into(),
        },
        atoms,
        weights: weights.iter().map(|w| w / kept).collect(),
        eps_schedule: settings.eps_schedule[..settings.l_max].to_vec(),
        q1: settings.q1[..settings.m_max].to_vec(),
        q2: settings.q2[..settings.l_max].to_vec(),
        block_sizes,
        truncation_mass,
        warnings,
        family: Some(family.clone()),
    };
    let audit = audit_covering(&net, settings.seed)?;
    if let Some(fail) = audit.failures.first() {
        return Err(Error::Capacity {
            m: fail.m,
            l: fail.l,
            cap: settings.atom_cap,
        });
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringFailure {
    pub m: usize,
    pub l: usize,
    pub params: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringAudit {
    /// Family members drawn per `(m, l)` block.
    pub samples_per_block: usize,
    /// Largest `distance / epsilon_l` observed.
    pub worst_ratio: f64,
    pub failures: Vec<CoveringFailure>,
}

/// Draws `1000 * p` fresh parameters per block and checks each lies within
/// `epsilon_l` of a block atom. The containing cell's centre is tried first;
/// every atom of the block is scanned only when it misses.
pub fn audit_covering(net: &PriorNet, seed: u64) -> Result<CoveringAudit> {
    let family = net
        .family
        .as_ref()
        .ok_or_else(|| Error::invalid("net", "explicit nets carry no family to audit"))?;
    let bounds = family.bounds();
    let p = bounds.len();
    let samples = 1000 * p;
    let mut start = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut failures = Vec::new();
    for (mi, row) in net.block_sizes.iter().enumerate() {
        for (li, &n) in row.iter().enumerate() {
            let (m, l) = (mi + 1, li + 1);
            let block = &net.atoms[start..start + n];
            start += n;
            let eps = net.eps_schedule[li];
            let counts: Vec<usize> = (0..p)
                .map(|j| {
                    let mut distinct: Vec<f64> = block.iter().map(|a| a.params[j]).collect();
                    distinct.sort_by(f64::total_cmp);
                    distinct.dedup();
                    distinct.len()
                })
                .collect();
            let results: Vec<Result<(Vec<f64>, f64)>> = (0..samples)
                .into_par_iter()
                .map(|s| {
                    let mut r = rng::stream(rng::derive_seed(seed, (m * 1000 + l) as u64), s as u64);
                    let theta = family.sample(&mut r);
                    let member = family.member(&theta)?;
                    let mut flat = 0;
                    let mut stride = 1;
                    for j in 0..p {
                        let (lo, hi) = bounds[j];
                        let k = (((theta[j] - lo) / (hi - lo) * counts[j] as f64) as usize).min(counts[j] - 1);
                        flat += k * stride;
                        stride *= counts[j];
                    }
                    let mut d = sup_metric(&member, &block[flat].spec, m as f64, sup_grid_points(family.dim()))?;
                    if d > eps {
                        for a in block {
                            d = d.min(sup_metric(&member, &a.spec, m as f64, sup_grid_points(family.dim()))?);
                        }
                    }
                    Ok((theta, d))
                })
                .collect();
            for r in results {
                let (theta, d) = r?;
                worst_ratio = worst_ratio.max(d / eps);
                if d > eps * (1.0 + 1e-9) {
                    failures.push(CoveringFailure {
                        m,
                        l,
                        params: theta,
                        distance: d,
                    });
                }
            }
        }
    }
    Ok(CoveringAudit {
        samples_per_block: samples,
        worst_ratio,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub mass: f64,
    pub nearest_distance: f64,
    /// Smallest `(m, l)` (by `m`, then `l`) with an atom inside the ball.
    pub minimal_block: Option<(usize, usize)>,
}

/// Prior mass of `{b : ||b - b0||_{2, mu_b0} < radius}`.
pub fn prior_ball_mass(net: &PriorNet, b0: &DriftSpec, law0: &StationaryLaw, radius: f64) -> Result<BallMass> {
    let distances: Vec<f64> = net
        .atoms
        .par_iter()
        .map(|a| l2_mu_distance(&a.spec, b0, law0).map(|e| e.value))
        .collect::<Result<_>>()?;
    Ok(ball_mass_from_distances(net, &distances, radius))
}

/// [`prior_ball_mass`] from precomputed atom distances.
pub fn ball_mass_from_distances(net: &PriorNet, distances: &[f64], radius: f64) -> BallMass {
    let mut mass = 0.0;
    let mut nearest = f64::INFINITY;
    let mut minimal: Option<(usize, usize)> = None;
    for ((a, w), d) in net.atoms.iter().zip(&net.weights).zip(distances) {
        nearest = nearest.min(*d);
        if *d < radius {
            mass += w;
            let block = (a.m, a.l);
            if minimal.is_none_or(|b| block < b) {
                minimal = Some(block);
            }
        }
    }
    BallMass {
        mass,
        nearest_distance: nearest,
        minimal_block: minimal,
    }
}

/// `4 K^2 d int_{|x| > m} (1 + |x|)^2 pi_b0(x) dx`.
pub fn tail_truncation_bound(law0: &StationaryLaw, m: f64, growth_k: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::invalid("m", "must be non-negative"));
    }
    let d = law0.dim() as f64;
    let integral = match (law0.dim(), law0.half_width()) {
        (1, Some(l)) if m < l => {
            let g = |x: f64| (1.0 + x.abs()).powi(2) * law0.density(&[x]);
            legendre_panels(g, m, l, 0.05) + legendre_panels(g, -l, -m, 0.05)
        }
        (1, Some(_)) => 0.0,
        _ => {
            law0.expect(|x| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > m {
                    (1.0 + r).powi(2)
                } else {
                    0.0
                }
            })
            .value
        }
    };
    Ok(4.0 * growth_k * growth_k * d * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::QuadratureConfig;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ou(beta: f64) -> DriftSpec {
        DriftSpec::ou(beta, 2.0).unwrap()
    }

    #[test]
    fn sup_metric_of_ou_pair() {
        assert_relative_eq!(sup_metric(&ou(1.0), &ou(1.2), 1.0, 101).unwrap(), 0.2, epsilon = 1e-12);
        assert_eq!(sup_metric(&ou(1.0), &ou(1.0), 1.0, 101).unwrap(), 0.0);
    }

    #[test]
    fn two_atoms_cover_the_unit_ou_block() {
        let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
        let net = build_net(&family, &NetSettings::dyadic(1, 1, vec![0.5], 1)).unwrap();
        assert_eq!(net.block_sizes, vec![vec![2]]);
        let betas: Vec<f64> = net.atoms.iter().map(|a| a.params[0]).collect();
        assert_eq!(betas, vec![0.5, 1.5]);
        assert_relative_eq!(net.truncation_mass, 0.75, epsilon = 1e-15);
        assert_relative_eq!(net.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dyadic_block_weight_before_renormalization() {
        let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
        let net = build_net(&family, &NetSettings::dyadic(2, 2, vec![0.5, 0.25], 1)).unwrap();
        let kept = 1.0 - net.truncation_mass;
        let first = net.atoms.iter().position(|a| (a.m, a.l) == (1, 1)).unwrap();
        assert_relative_eq!(net.weights[first] * kept, 0.125, epsilon = 1e-15);
        assert!(net.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn huge_epsilon_gives_one_atom_per_block() {
        let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
        let net = build_net(&family, &NetSettings::dyadic(2, 2, vec![100.0, 50.0], 1)).unwrap();
        assert!(net.block_sizes.iter().flatten().all(|n| *n == 1));
    }

    #[test]
    fn capacity_error_names_the_block() {
        let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
        let mut settings = NetSettings::dyadic(2, 2, vec![0.5, 0.01], 1);
        settings.atom_cap = 50;
        match build_net(&family, &settings) {
            Err(Error::Capacity { m, l, .. }) => assert_eq!((m, l), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fresh_audit_of_a_two_parameter_net() {
        let family = FunctionFamily::log_linear(2, [0.4, 0.6], [-0.1, 0.1], 4.0, 4.0).unwrap();
        let net = build_net(&family, &NetSettings::dyadic(1, 2, vec![0.5, 0.25], 3)).unwrap();
        let audit = audit_covering(&net, 99).unwrap();
        assert_eq!(audit.samples_per_block, 2000);
        assert!(audit.failures.is_empty());
        assert!(audit.worst_ratio <= 1.0);
    }

    #[test]
    fn ball_mass_for_ou_net() {
        let family = FunctionFamily::ou(0.0, 2.0, 2.0).unwrap();
        let net = build_net(&family, &NetSettings::dyadic(2, 3, vec![0.5, 0.25, 0.125], 1)).unwrap();
        let b0 = ou(1.0);
        let law0 = StationaryLaw::new(&b0, &QuadratureConfig::default()).unwrap();
        let small = prior_ball_mass(&net, &b0, &law0, 0.05).unwrap();
        let expected: f64 = net
            .atoms
            .iter()
            .zip(&net.weights)
            .filter(|(a, _)| (a.params[0] - 1.0).abs() < 0.05 / 0.5f64.sqrt())
            .map(|(_, w)| w)
            .sum();
        assert_relative_eq!(small.mass, expected, epsilon = 1e-12);
        assert_relative_eq!(prior_ball_mass(&net, &b0, &law0, 1e6).unwrap().mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_bound_values() {
        let b0 = DriftSpec::ou(1.0, 1.0).unwrap();
        let law0 = StationaryLaw::new(&b0, &QuadratureConfig::default()).unwrap();
        assert!(tail_truncation_bound(&law0, 5.0, 1.0).unwrap() < 1e-8);
        // E(1 + |X|)^2 = 1 + 2 E|X| + E X^2 with X ~ N(0, 1/2)
        let full = 4.0 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() + 0.5);
        assert_relative_eq!(tail_truncation_bound(&law0, 0.0, 1.0).unwrap(), full, max_relative = 1e-8);
        let mut last = f64::INFINITY;
        for m in 0..10 {
            let v = tail_truncation_bound(&law0, m as f64, 1.0).unwrap();
            assert!(v <= last);
            last = v;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn sup_metric_triangle_inequality(a in 0.1f64..3.0, b in 0.1f64..3.0, c in 0.1f64..3.0, shift in -1.0f64..1.0) {
            let lin = |beta: f64, s: f64| DriftSpec::new(
                1,
                DriftForm::Parametric1d { id: crate::drift::ParametricId::PerturbedLinear, params: vec![beta, s, 2.0] },
                4.0,
                Dissipativity { r: 0.05, m: 30.0, alpha: 1.0 },
            ).unwrap();
            let (x, y, z) = (lin(a, shift), lin(b, 0.0), lin(c, -shift));
            let dxy = sup_metric(&x, &y, 2.0, 101).unwrap();
            let dyz = sup_metric(&y, &z, 2.0, 101).unwrap();
            let dxz = sup_metric(&x, &z, 2.0, 101).unwrap();
            prop_assert!(dxz <= dxy + dyz + 1e-12);
        }
    }

    #[test]
    fn envelope_is_audited_at_the_corners() {
        let mut family = FunctionFamily::log_linear(2, [0.4, 0.6], [-0.1, 0.1], 2.0, 2.0).unwrap();
        family.envelope = vec![1.0, 0.7];
        assert!(family.check().is_ok());
        // The corner (0.6, 0.1) gives 0.6 s + 0.1 ln(1 + s) > 0.6 s for s > 0.
        family.envelope = vec![0.0, 0.6];
        let err = family.check().unwrap_err().to_string();
        assert!(err.contains("exceeds G"), "{err}");
    }

}
