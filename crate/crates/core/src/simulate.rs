//! Discrete observations `X_0, X_Delta, ..., X_{n Delta}` of `dX = b(X) dt + dW`.

use crate::drift::{sample_stationary, DriftSpec, StationaryLaw};
use crate::error::{Error, Result};
use crate::points::Points;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ExactOu,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScheme {
    pub kind: SchemeKind,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_substeps() -> usize {
    64
}

impl SimScheme {
    pub fn exact_ou() -> Self {
        SimScheme {
            kind: SchemeKind::ExactOu,
            substeps: 1,
        }
    }

    pub fn euler(substeps: usize) -> Self {
        SimScheme {
            kind: SchemeKind::Euler,
            substeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Simulated { seed: u64, scheme: SimScheme },
    Ingested { file_id: String },
}

/// Equally spaced observations; `points.len() = n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    delta: f64,
    points: Points,
    origin: Origin,
}

impl ObservationSeries {
    pub fn new(delta: f64, points: Points, origin: Origin) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", "must be positive and finite"));
        }
        if points.is_empty() {
            return Err(Error::invalid("points", "a series holds at least X_0"));
        }
        if points.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("points", "must be finite"));
        }
        Ok(ObservationSeries {
            delta,
            points,
            origin,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Number of transitions `n`.
    pub fn transitions(&self) -> usize {
        self.points.len() - 1
    }

    /// The first `n` transitions.
    pub fn prefix(&self, n: usize) -> ObservationSeries {
        ObservationSeries {
            delta: self.delta,
            points: self.points.prefix(n.min(self.transitions()) + 1),
            origin: self.origin.clone(),
        }
    }

    /// Writes the `t,x1[,x2,...]` table.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (i, x) in self.points.iter().enumerate() {
            let mut row = vec![(i as f64 * self.delta).to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a `t,x1[,x2,...]` table, auditing every time stamp against `i * delta`.
    /// Row numbers in errors count data rows from 1.
    pub fn read_csv<R: Read>(reader: R, delta: f64, file_id: impl Into<String>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", "must be positive and finite"));
        }
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        let well_formed = dim >= 1
            && &header[0] == "t"
            && (1..=dim).all(|i| header[i] == *format!("x{i}"));
        if !well_formed {
            return Err(Error::Ingest {
                row: 0,
                reason: format!("header must be t,x1,...,xd; found {:?}", header.iter().collect::<Vec<_>>()),
            });
        }
        let mut points = Points::new(dim);
        let mut x = vec![0.0; dim];
        for (i, record) in r.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Error::Ingest {
                row,
                reason: e.to_string(),
            })?;
            let cell = |j: usize| -> Result<f64> {
                let v: f64 = record[j].parse().map_err(|_| Error::Ingest {
                    row,
                    reason: format!("non-numeric cell {:?} in column {}", &record[j], &header[j]),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Ingest {
                        row,
                        reason: format!("non-finite value in column {}", &header[j]),
                    })
                }
            };
            let t = cell(0)?;
            let expected = i as f64 * delta;
            if (t - expected).abs() > 1e-9 * expected.max(delta) {
                return Err(Error::Ingest {
                    row,
                    reason: format!("time {t} differs from i*delta = {expected}"),
                });
            }
            for (j, xj) in x.iter_mut().enumerate() {
                *xj = cell(j + 1)?;
            }
            points.push(&x);
        }
        if points.is_empty() {
            return Err(Error::Ingest {
                row: 1,
                reason: "no observations".into(),
            });
        }
        ObservationSeries::new(delta, points, Origin::Ingested { file_id: file_id.into() })
    }
}

/// Reads a series file; the file path becomes the origin id.
pub fn ingest_csv(path: &Path, delta: f64) -> Result<ObservationSeries> {
    let file = std::fs::File::open(path)?;
    ObservationSeries::read_csv(file, delta, path.display().to_string())
}

/// Radius of the guard box outside which an Euler path counts as exploded.
pub fn explosion_radius(spec: &DriftSpec) -> f64 {
    10.0 * spec.default_half_width()
}

/// Simulates `n` transitions started from a stationary draw.
///
/// `X_0` uses stream 0 of `seed` (through [`sample_stationary`]) and the path uses stream 1.
pub fn simulate_series(
    spec: &DriftSpec,
    law: &StationaryLaw,
    delta: f64,
    n: usize,
    scheme: SimScheme,
    seed: u64,
) -> Result<ObservationSeries> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive and finite"));
    }
    if scheme.substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    if law.dim() != spec.dim() {
        return Err(Error::invalid("law", "dimension differs from the drift"));
    }
    let beta = match scheme.kind {
        SchemeKind::ExactOu => Some(spec.ou_rate().ok_or_else(|| Error::Incompatible {
            method: "exact_ou".into(),
            reason: "a drift that is not Ornstein-Uhlenbeck".into(),
        })?),
        SchemeKind::Euler => None,
    };
    let dim = spec.dim();
    let start = sample_stationary(law, 1, seed)?;
    let mut x = start.points.get(0).to_vec();
    let mut points = Points::with_capacity(dim, n + 1);
    points.push(&x);
    let mut rng = rng::stream(seed, 1);
    match beta {
        Some(beta) => {
            let decay = (-beta * delta).exp();
            let sd = (-(-2.0 * beta * delta).exp_m1() / (2.0 * beta)).sqrt();
            for _ in 0..n {
                for xi in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *xi = *xi * decay + sd * z;
                }
                points.push(&x);
            }
        }
        None => {
            let dt = delta / scheme.substeps as f64;
            let sqrt_dt = dt.sqrt();
            let radius = explosion_radius(spec);
            let mut b = vec![0.0; dim];
            for step in 0..n {
                for _ in 0..scheme.substeps {
                    spec.eval_into(&x, &mut b);
                    for (xi, bi) in x.iter_mut().zip(&b) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *xi += bi * dt + sqrt_dt * z;
                    }
                }
                if x.iter().any(|v| !(v.abs() <= radius)) {
                    return Err(Error::Explosion {
                        radius,
                        step: step + 1,
                    });
                }
                points.push(&x);
            }
        }
    }
    ObservationSeries::new(delta, points, Origin::Simulated { seed, scheme })
}

/// Brownian increments laid out as `[path][substep][coordinate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBundle {
    dim: usize,
    delta: f64,
    substeps: usize,
    n_paths: usize,
    increments: Vec<f64>,
}

impl BrownianBundle {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Increments of path `p`, `substeps * dim` values.
    pub fn path(&self, p: usize) -> &[f64] {
        let len = self.substeps * self.dim;
        &self.increments[p * len..(p + 1) * len]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W_Delta` of path `p`, written into `out`.
    pub fn endpoint(&self, p: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for step in self.path(p).chunks_exact(self.dim) {
            for (o, dw) in out.iter_mut().zip(step) {
                *o += dw;
            }
        }
    }
}

/// `n_paths` independent Brownian paths on `[0, delta]`; path `p` draws from stream `p` of `seed`.
pub fn simulate_brownian_bundle(
    d: usize,
    delta: f64,
    substeps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<BrownianBundle> {
    if d == 0 || substeps == 0 || n_paths == 0 {
        return Err(Error::invalid("bundle", "dimension, substeps and paths must be positive"));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive and finite"));
    }
    let sd = (delta / substeps as f64).sqrt();
    let len = substeps * d;
    let mut increments = vec![0.0; n_paths * len];
    increments
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(p, chunk)| {
            let mut rng = rng::stream(seed, p as u64);
            for v in chunk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sd * z;
            }
        });
    Ok(BrownianBundle {
        dim: d,
        delta,
        substeps,
        n_paths,
        increments,
    })
}
